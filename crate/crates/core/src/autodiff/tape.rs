//! The Wengert tape: append-only operation record with cached values.

use crate::autodiff::scalar;
use crate::error::{Error, Result};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Watermark for rolling the tape back to an earlier state, used when a
/// sampled query has to be discarded and redrawn.
#[derive(Clone, Copy, Debug)]
pub struct TapeMark {
    nodes: usize,
    pool: usize,
    leaves: usize,
}

/// One recorded operation. Operands are raw node indices; n-ary operations
/// store their operand lists in the tape's shared index pool.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Leaf,
    Const,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Sqrt(u32),
    Abs(u32),
    Tanh(u32),
    Softplus(u32),
    Sigmoid(u32),
    Relu(u32),
    Step(u32),
    Sign(u32),
    /// Euclidean norm of a 3-vector of nodes.
    Norm3(u32, u32, u32),
    /// Inner product: `pool[off..off+len] . pool[off+len..off+2*len]`.
    Dot { off: u32, len: u32 },
    /// Plain sum of `pool[off..off+len]`.
    Sum { off: u32, len: u32 },
}

/// Sentinel operand meaning "literal 1.0" in gradient-sweep bookkeeping.
const ONE: u32 = u32::MAX;
/// Sentinel operand meaning "literal -1.0".
const NEG_ONE: u32 = u32::MAX - 1;
/// Sentinel adjoint meaning "no gradient flows here".
const ZERO: u32 = u32::MAX - 2;

/// Append-only scalar computation graph.
///
/// Single-writer: construction and `gradient_nodes` take `&mut self`.
/// A finished tape is freely readable (`value`, `backward`) from shared
/// references.
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<f64>,
    pool: Vec<u32>,
    /// Leaf nodes in creation order; `backward` reports gradients in this order.
    leaves: Vec<u32>,
    /// Cached constants, reset together with the tape.
    cached_one: Option<u32>,
    cached_neg_one: Option<u32>,
    cached_zero: Option<u32>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            vals: Vec::new(),
            pool: Vec::new(),
            leaves: Vec::new(),
            cached_one: None,
            cached_neg_one: None,
            cached_zero: None,
        }
    }

    /// Drop every node but keep allocated capacity for reuse across
    /// optimization iterations.
    pub fn reset(&mut self) {
        self.ops.clear();
        self.vals.clear();
        self.pool.clear();
        self.leaves.clear();
        self.cached_one = None;
        self.cached_neg_one = None;
        self.cached_zero = None;
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    #[inline]
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    #[inline]
    pub fn value(&self, node: NodeId) -> f64 {
        self.vals[node.index()]
    }

    pub fn mark(&self) -> TapeMark {
        TapeMark { nodes: self.ops.len(), pool: self.pool.len(), leaves: self.leaves.len() }
    }

    /// Roll back to `mark`, discarding all nodes appended after it.
    pub fn truncate(&mut self, mark: TapeMark) {
        self.ops.truncate(mark.nodes);
        self.vals.truncate(mark.nodes);
        self.pool.truncate(mark.pool);
        self.leaves.truncate(mark.leaves);
        let lim = mark.nodes as u32;
        for slot in [&mut self.cached_one, &mut self.cached_neg_one, &mut self.cached_zero] {
            if slot.is_some_and(|n| n >= lim) {
                *slot = None;
            }
        }
    }

    #[inline]
    fn push(&mut self, op: Op, val: f64) -> NodeId {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.vals.push(val);
        NodeId(id)
    }

    // ── Construction ─────────────────────────────────────────────────

    /// Register a differentiable input. `backward` reports gradients for all
    /// leaves in registration order.
    pub fn leaf(&mut self, value: f64) -> NodeId {
        let id = self.push(Op::Leaf, value);
        self.leaves.push(id.0);
        id
    }

    /// Register a contiguous run of leaves; returns the id of the first.
    pub fn leaf_slice(&mut self, values: &[f64]) -> NodeId {
        let base = NodeId(self.ops.len() as u32);
        for &v in values {
            self.leaf(v);
        }
        base
    }

    /// Constant node. Constants never receive gradients.
    pub fn constant(&mut self, value: f64) -> NodeId {
        self.push(Op::Const, value)
    }

    fn const_one(&mut self) -> u32 {
        match self.cached_one {
            Some(n) => n,
            None => {
                let n = self.constant(1.0).0;
                self.cached_one = Some(n);
                n
            }
        }
    }

    fn const_neg_one(&mut self) -> u32 {
        match self.cached_neg_one {
            Some(n) => n,
            None => {
                let n = self.constant(-1.0).0;
                self.cached_neg_one = Some(n);
                n
            }
        }
    }

    fn const_zero(&mut self) -> u32 {
        match self.cached_zero {
            Some(n) => n,
            None => {
                let n = self.constant(0.0).0;
                self.cached_zero = Some(n);
                n
            }
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.vals[a.index()] + self.vals[b.index()];
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.vals[a.index()] - self.vals[b.index()];
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.vals[a.index()] * self.vals[b.index()];
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.vals[a.index()] / self.vals[b.index()];
        self.push(Op::Div(a.0, b.0), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = -self.vals[a.index()];
        self.push(Op::Neg(a.0), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a.index()].sqrt();
        self.push(Op::Sqrt(a.0), v)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a.index()].abs();
        self.push(Op::Abs(a.0), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a.index()].tanh();
        self.push(Op::Tanh(a.0), v)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = scalar::softplus(self.vals[a.index()]);
        self.push(Op::Softplus(a.0), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = scalar::sigmoid(self.vals[a.index()]);
        self.push(Op::Sigmoid(a.0), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = scalar::relu(self.vals[a.index()]);
        self.push(Op::Relu(a.0), v)
    }

    /// Heaviside step of a node's value; derivative is zero everywhere.
    pub fn step_fn(&mut self, a: NodeId) -> NodeId {
        let v = scalar::step(self.vals[a.index()]);
        self.push(Op::Step(a.0), v)
    }

    /// Sign of a node's value; derivative is zero everywhere.
    pub fn sign_fn(&mut self, a: NodeId) -> NodeId {
        let v = scalar::sign(self.vals[a.index()]);
        self.push(Op::Sign(a.0), v)
    }

    /// `sqrt(x² + y² + z²)` as a single primitive. At the origin the
    /// subgradient 0 is used by the numeric backward sweep.
    pub fn norm3(&mut self, x: NodeId, y: NodeId, z: NodeId) -> NodeId {
        let (vx, vy, vz) = (self.vals[x.index()], self.vals[y.index()], self.vals[z.index()]);
        let v = (vx * vx + vy * vy + vz * vz).sqrt();
        self.push(Op::Norm3(x.0, y.0, z.0), v)
    }

    /// Inner product of two equal-length node lists.
    pub fn dot(&mut self, xs: &[NodeId], ys: &[NodeId]) -> NodeId {
        assert_eq!(xs.len(), ys.len(), "dot operand lists must have equal length");
        assert!(!xs.is_empty(), "dot of empty lists");
        let off = self.pool.len() as u32;
        let len = xs.len() as u32;
        self.pool.extend(xs.iter().map(|n| n.0));
        self.pool.extend(ys.iter().map(|n| n.0));
        let mut v = 0.0;
        for i in 0..xs.len() {
            v += self.vals[xs[i].index()] * self.vals[ys[i].index()];
        }
        self.push(Op::Dot { off, len }, v)
    }

    /// Inner product of a contiguous node range (e.g. a parameter row) with a
    /// node list, avoiding a temporary id buffer for the hot network forward.
    pub fn dot_range(&mut self, first: NodeId, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "dot of empty lists");
        let off = self.pool.len() as u32;
        let len = xs.len() as u32;
        self.pool.extend(first.0..first.0 + len);
        self.pool.extend(xs.iter().map(|n| n.0));
        let mut v = 0.0;
        for (i, x) in xs.iter().enumerate() {
            v += self.vals[first.index() + i] * self.vals[x.index()];
        }
        self.push(Op::Dot { off, len }, v)
    }

    /// Sum of a node list.
    pub fn sum(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "sum of empty list");
        let off = self.pool.len() as u32;
        let len = xs.len() as u32;
        self.pool.extend(xs.iter().map(|n| n.0));
        let v = xs.iter().map(|n| self.vals[n.index()]).sum();
        self.push(Op::Sum { off, len }, v)
    }

    // ── Forward replay ───────────────────────────────────────────────

    /// Recompute every cached value from the leaves in topological order.
    /// Leaf and constant values are kept as stored.
    pub fn replay(&mut self) {
        for k in 0..self.ops.len() {
            let v = match self.ops[k] {
                Op::Leaf | Op::Const => continue,
                Op::Add(a, b) => self.vals[a as usize] + self.vals[b as usize],
                Op::Sub(a, b) => self.vals[a as usize] - self.vals[b as usize],
                Op::Mul(a, b) => self.vals[a as usize] * self.vals[b as usize],
                Op::Div(a, b) => self.vals[a as usize] / self.vals[b as usize],
                Op::Neg(a) => -self.vals[a as usize],
                Op::Sqrt(a) => self.vals[a as usize].sqrt(),
                Op::Abs(a) => self.vals[a as usize].abs(),
                Op::Tanh(a) => self.vals[a as usize].tanh(),
                Op::Softplus(a) => scalar::softplus(self.vals[a as usize]),
                Op::Sigmoid(a) => scalar::sigmoid(self.vals[a as usize]),
                Op::Relu(a) => scalar::relu(self.vals[a as usize]),
                Op::Step(a) => scalar::step(self.vals[a as usize]),
                Op::Sign(a) => scalar::sign(self.vals[a as usize]),
                Op::Norm3(x, y, z) => {
                    let (vx, vy, vz) =
                        (self.vals[x as usize], self.vals[y as usize], self.vals[z as usize]);
                    (vx * vx + vy * vy + vz * vz).sqrt()
                }
                Op::Dot { off, len } => {
                    let (off, len) = (off as usize, len as usize);
                    let mut v = 0.0;
                    for i in 0..len {
                        v += self.vals[self.pool[off + i] as usize]
                            * self.vals[self.pool[off + len + i] as usize];
                    }
                    v
                }
                Op::Sum { off, len } => {
                    let (off, len) = (off as usize, len as usize);
                    self.pool[off..off + len]
                        .iter()
                        .map(|&n| self.vals[n as usize])
                        .sum()
                }
            };
            self.vals[k] = v;
        }
    }

    // ── Numeric reverse sweep ────────────────────────────────────────

    /// d(output)/d(leaf) for every leaf, in leaf registration order.
    /// Leaves that `output` does not depend on get gradient 0.
    pub fn backward(&self, output: NodeId) -> Result<Vec<f64>> {
        let adj = self.adjoints(output)?;
        Ok(self.leaves.iter().map(|&l| adj[l as usize]).collect())
    }

    /// d(output)/d(node) for an arbitrary set of nodes.
    pub fn backward_wrt(&self, output: NodeId, wrts: &[NodeId]) -> Result<Vec<f64>> {
        let adj = self.adjoints(output)?;
        Ok(wrts.iter().map(|w| adj[w.index()]).collect())
    }

    /// Full adjoint vector over the tape. The sweep is a fixed reverse
    /// iteration, so identical tapes produce bitwise-identical gradients.
    pub fn adjoints(&self, output: NodeId) -> Result<Vec<f64>> {
        let out = output.index();
        if out >= self.ops.len() {
            return Err(Error::InvalidNode(out));
        }
        let mut adj = vec![0.0f64; self.ops.len()];
        adj[out] = 1.0;
        for k in (0..=out).rev() {
            let a = adj[k];
            if a == 0.0 {
                continue;
            }
            match self.ops[k] {
                Op::Leaf | Op::Const | Op::Step(_) | Op::Sign(_) => {}
                Op::Add(x, y) => {
                    adj[x as usize] += a;
                    adj[y as usize] += a;
                }
                Op::Sub(x, y) => {
                    adj[x as usize] += a;
                    adj[y as usize] -= a;
                }
                Op::Mul(x, y) => {
                    adj[x as usize] += a * self.vals[y as usize];
                    adj[y as usize] += a * self.vals[x as usize];
                }
                Op::Div(x, y) => {
                    let vy = self.vals[y as usize];
                    adj[x as usize] += a / vy;
                    adj[y as usize] -= a * self.vals[k] / vy;
                }
                Op::Neg(x) => adj[x as usize] -= a,
                Op::Sqrt(x) => {
                    adj[x as usize] += a * 0.5 / self.vals[k];
                }
                Op::Abs(x) => {
                    adj[x as usize] += a * scalar::sign(self.vals[x as usize]);
                }
                Op::Tanh(x) => {
                    let t = self.vals[k];
                    adj[x as usize] += a * (1.0 - t * t);
                }
                Op::Softplus(x) => {
                    adj[x as usize] += a * scalar::sigmoid(self.vals[x as usize]);
                }
                Op::Sigmoid(x) => {
                    let s = self.vals[k];
                    adj[x as usize] += a * s * (1.0 - s);
                }
                Op::Relu(x) => {
                    adj[x as usize] += a * scalar::step(self.vals[x as usize]);
                }
                Op::Norm3(x, y, z) => {
                    let n = self.vals[k];
                    // subgradient 0 at the origin
                    if n > 0.0 {
                        let s = a / n;
                        adj[x as usize] += s * self.vals[x as usize];
                        adj[y as usize] += s * self.vals[y as usize];
                        adj[z as usize] += s * self.vals[z as usize];
                    }
                }
                Op::Dot { off, len } => {
                    let (off, len) = (off as usize, len as usize);
                    for i in 0..len {
                        let x = self.pool[off + i] as usize;
                        let y = self.pool[off + len + i] as usize;
                        adj[x] += a * self.vals[y];
                        adj[y] += a * self.vals[x];
                    }
                }
                Op::Sum { off, len } => {
                    let (off, len) = (off as usize, len as usize);
                    for &x in &self.pool[off..off + len] {
                        adj[x as usize] += a;
                    }
                }
            }
        }
        Ok(adj)
    }

    // ── Symbolic gradient (reverse-over-reverse) ─────────────────────

    /// Append nodes computing `d(output)/d(wrt)` and return the node holding
    /// the gradient. A later `backward` pass differentiates through it.
    pub fn gradient_node(&mut self, output: NodeId, wrt: NodeId) -> Result<NodeId> {
        Ok(self.gradient_nodes(output, &[wrt])?[0])
    }

    /// Batched form of [`Tape::gradient_node`]: one adjoint construction
    /// serves every requested `wrt`, which is what the spatial gradient of a
    /// network uses for its three query coordinates.
    pub fn gradient_nodes(&mut self, output: NodeId, wrts: &[NodeId]) -> Result<Vec<NodeId>> {
        let out = output.index();
        if out >= self.ops.len() {
            return Err(Error::InvalidNode(out));
        }
        for w in wrts {
            if w.index() >= self.ops.len() {
                return Err(Error::InvalidNode(w.index()));
            }
        }

        // Nodes later than the output can never influence it.
        let lo = match wrts.iter().map(|w| w.index()).filter(|&w| w <= out).min() {
            Some(lo) => lo,
            None => {
                let z = NodeId(self.const_zero());
                return Ok(wrts.iter().map(|_| z).collect());
            }
        };
        let n = out - lo + 1;

        // dep: node depends on at least one wrt. needed: output depends on node.
        let mut dep = vec![false; n];
        for w in wrts {
            if w.index() <= out {
                dep[w.index() - lo] = true;
            }
        }
        let mut scratch: Vec<u32> = Vec::with_capacity(16);
        for k in lo..=out {
            if dep[k - lo] {
                continue;
            }
            self.collect_operands(k, &mut scratch);
            if scratch.iter().any(|&o| (o as usize) >= lo && dep[o as usize - lo]) {
                dep[k - lo] = true;
            }
        }
        let mut needed = vec![false; n];
        needed[out - lo] = true;
        for k in (lo..=out).rev() {
            if !needed[k - lo] {
                continue;
            }
            self.collect_operands(k, &mut scratch);
            for &o in &scratch {
                if (o as usize) >= lo {
                    needed[o as usize - lo] = true;
                }
            }
        }
        let active = |i: usize| dep[i] && needed[i];

        // Count contributions per node, then lay them out flat.
        let mut counts = vec![0u32; n];
        for k in lo..=out {
            if !active(k - lo) {
                continue;
            }
            self.collect_operands(k, &mut scratch);
            if derivative_is_zero(self.ops[k]) {
                continue;
            }
            for &o in &scratch {
                let o = o as usize;
                if o >= lo && active(o - lo) {
                    counts[o - lo] += 1;
                }
            }
        }
        let mut offsets = vec![0u32; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let total = offsets[n] as usize;
        let mut entries: Vec<(u32, u32)> = vec![(ZERO, ZERO); total];
        let mut cursor: Vec<u32> = offsets[..n].to_vec();

        // Reverse sweep: finalize each adjoint, then scatter contributions
        // (adjoint, partial) to the operands.
        let mut adj_of = vec![ZERO; n];
        for k in (lo..=out).rev() {
            let i = k - lo;
            if !active(i) {
                continue;
            }
            let a = if k == out {
                ONE
            } else {
                let lo_e = offsets[i] as usize;
                let hi_e = cursor[i] as usize;
                self.combine_contributions(&entries[lo_e..hi_e])
            };
            adj_of[i] = a;
            if a == ZERO || derivative_is_zero(self.ops[k]) {
                continue;
            }
            let op = self.ops[k];
            let node = k as u32;
            self.scatter_contributions(op, node, a, lo, &dep, &needed, &mut entries, &mut cursor, &offsets);
        }

        let mut result = Vec::with_capacity(wrts.len());
        for w in wrts {
            let id = if w.index() > out {
                NodeId(self.const_zero())
            } else {
                match adj_of[w.index() - lo] {
                    ONE => NodeId(self.const_one()),
                    NEG_ONE => NodeId(self.const_neg_one()),
                    ZERO => NodeId(self.const_zero()),
                    a => NodeId(a),
                }
            };
            result.push(id);
        }
        Ok(result)
    }

    /// Gather the operand node indices of `k` into `buf`.
    fn collect_operands(&self, k: usize, buf: &mut Vec<u32>) {
        buf.clear();
        match self.ops[k] {
            Op::Leaf | Op::Const => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                buf.push(a);
                buf.push(b);
            }
            Op::Neg(a)
            | Op::Sqrt(a)
            | Op::Abs(a)
            | Op::Tanh(a)
            | Op::Softplus(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Step(a)
            | Op::Sign(a) => buf.push(a),
            Op::Norm3(x, y, z) => {
                buf.push(x);
                buf.push(y);
                buf.push(z);
            }
            Op::Dot { off, len } => {
                buf.extend_from_slice(&self.pool[off as usize..(off + 2 * len) as usize]);
            }
            Op::Sum { off, len } => {
                buf.extend_from_slice(&self.pool[off as usize..(off + len) as usize]);
            }
        }
    }

    /// Turn a contribution list into a single adjoint node (or sentinel).
    fn combine_contributions(&mut self, entries: &[(u32, u32)]) -> u32 {
        match entries.len() {
            0 => ZERO,
            1 => {
                let (a, p) = entries[0];
                self.one_term(a, p)
            }
            _ => {
                if entries.iter().all(|&(_, p)| p == ONE) {
                    // Pure fan-out: plain sum of upstream adjoints.
                    let xs: Vec<NodeId> =
                        entries.iter().map(|&(a, _)| NodeId(self.resolve(a))).collect();
                    self.sum(&xs).0
                } else {
                    let xs: Vec<NodeId> =
                        entries.iter().map(|&(a, _)| NodeId(self.resolve(a))).collect();
                    let ys: Vec<NodeId> =
                        entries.iter().map(|&(_, p)| NodeId(self.resolve(p))).collect();
                    self.dot(&xs, &ys).0
                }
            }
        }
    }

    fn one_term(&mut self, a: u32, p: u32) -> u32 {
        match (a, p) {
            (a, ONE) => a,
            (ONE, p) => p,
            (a, NEG_ONE) => {
                let an = self.resolve(a);
                self.neg(NodeId(an)).0
            }
            (a, p) => self.mul(NodeId(a), NodeId(p)).0,
        }
    }

    fn resolve(&mut self, sentinel_or_node: u32) -> u32 {
        match sentinel_or_node {
            ONE => self.const_one(),
            NEG_ONE => self.const_neg_one(),
            ZERO => self.const_zero(),
            n => n,
        }
    }

    /// Push `(adjoint_of_k, local partial)` onto each operand's contribution
    /// list. Partial derivative nodes are appended here as needed; they are
    /// ordinary nodes, so the next backward pass sees through them.
    #[allow(clippy::too_many_arguments)]
    fn scatter_contributions(
        &mut self,
        op: Op,
        node: u32,
        a: u32,
        lo: usize,
        dep: &[bool],
        needed: &[bool],
        entries: &mut [(u32, u32)],
        cursor: &mut [u32],
        offsets: &[u32],
    ) {
        let wants = |o: u32| {
            let oi = o as usize;
            oi >= lo && dep[oi - lo] && needed[oi - lo]
        };
        let mut push = |o: u32, adj: u32, partial: u32| {
            let oi = o as usize;
            if oi < lo || !(dep[oi - lo] && needed[oi - lo]) {
                return;
            }
            let c = cursor[oi - lo] as usize;
            debug_assert!(c < offsets[oi - lo + 1] as usize);
            entries[c] = (adj, partial);
            cursor[oi - lo] += 1;
        };
        match op {
            Op::Leaf | Op::Const | Op::Step(_) | Op::Sign(_) => {}
            Op::Add(x, y) => {
                push(x, a, ONE);
                push(y, a, ONE);
            }
            Op::Sub(x, y) => {
                push(x, a, ONE);
                push(y, a, NEG_ONE);
            }
            Op::Mul(x, y) => {
                push(x, a, y);
                push(y, a, x);
            }
            Op::Div(x, y) => {
                if wants(x) {
                    let one = self.const_one();
                    let inv = self.div(NodeId(one), NodeId(y)).0;
                    push(x, a, inv);
                }
                if wants(y) {
                    // d(x/y)/dy = -(x/y)/y
                    let q = self.div(NodeId(node), NodeId(y)).0;
                    let p = self.neg(NodeId(q)).0;
                    push(y, a, p);
                }
            }
            Op::Neg(x) => push(x, a, NEG_ONE),
            Op::Sqrt(x) => {
                if wants(x) {
                    let half = self.constant(0.5).0;
                    let p = self.div(NodeId(half), NodeId(node)).0;
                    push(x, a, p);
                }
            }
            Op::Abs(x) => {
                if wants(x) {
                    let p = self.sign_fn(NodeId(x)).0;
                    push(x, a, p);
                }
            }
            Op::Tanh(x) => {
                if wants(x) {
                    let sq = self.mul(NodeId(node), NodeId(node)).0;
                    let one = self.const_one();
                    let p = self.sub(NodeId(one), NodeId(sq)).0;
                    push(x, a, p);
                }
            }
            Op::Softplus(x) => {
                if wants(x) {
                    let p = self.sigmoid(NodeId(x)).0;
                    push(x, a, p);
                }
            }
            Op::Sigmoid(x) => {
                if wants(x) {
                    let one = self.const_one();
                    let om = self.sub(NodeId(one), NodeId(node)).0;
                    let p = self.mul(NodeId(node), NodeId(om)).0;
                    push(x, a, p);
                }
            }
            Op::Relu(x) => {
                if wants(x) {
                    let p = self.step_fn(NodeId(x)).0;
                    push(x, a, p);
                }
            }
            Op::Norm3(x, y, z) => {
                // d|v|/dv_i = v_i / |v|; the caller guards the norm away
                // from zero before dividing through it.
                for o in [x, y, z] {
                    if wants(o) {
                        let p = self.div(NodeId(o), NodeId(node)).0;
                        push(o, a, p);
                    }
                }
            }
            Op::Dot { off, len } => {
                let (off, len) = (off as usize, len as usize);
                for i in 0..len {
                    let x = self.pool[off + i];
                    let y = self.pool[off + len + i];
                    push(x, a, y);
                    push(y, a, x);
                }
            }
            Op::Sum { off, len } => {
                let (off, len) = (off as usize, len as usize);
                for i in 0..len {
                    let x = self.pool[off + i];
                    push(x, a, ONE);
                }
            }
        }
    }
}

/// Operations whose derivative is identically zero contribute nothing to any
/// operand's adjoint.
fn derivative_is_zero(op: Op) -> bool {
    matches!(op, Op::Leaf | Op::Const | Op::Step(_) | Op::Sign(_))
}
