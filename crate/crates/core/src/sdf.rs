//! The conditioned neural signed distance field `f(q, c)` and the
//! differentiable pulling of query points onto its zero-level set.
//!
//! A network evaluation exists in two forms that are bitwise identical:
//! a tape-free forward pass ([`SdfNetwork::evaluate`]) for meshing and
//! metrics, and a staged forward pass on a [`Tape`]
//! ([`SdfNetwork::stage`] + [`StagedNet::forward`]) whose output stays
//! differentiable with respect to parameters, code, and query. The pulled
//! point `q - f(q,c) · ∇f(q,c)/|∇f(q,c)|` is built from tape nodes, so a
//! matching loss over pulled points reaches the parameters through the
//! spatial gradient.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{scalar, NodeId, Tape};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Provenance};
use crate::vec3::Point3;

/// Gradient magnitudes below this reject the pulling operation; the caller
/// redraws the query instead of dividing by a vanishing norm.
pub const MIN_GRADIENT_NORM: f64 = 1e-8;

/// Hidden-layer activation. The default is a sharpened softplus: smooth
/// everywhere (the pulling operation differentiates the field), yet close
/// enough to a rectifier to train quickly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Softplus { beta: f64 },
    Tanh,
    Relu,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Softplus { beta: 10.0 }
    }
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            // Multiply by the reciprocal so this matches the taped form
            // (mul by a 1/beta constant) bit for bit.
            Activation::Softplus { beta } => scalar::softplus(x * beta) * (1.0 / beta),
            Activation::Tanh => x.tanh(),
            Activation::Relu => scalar::relu(x),
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Softplus { .. } => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }
}

/// Per-shape embedding vector conditioning the shared decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn zeros(len: usize) -> LatentCode {
        LatentCode(vec![0.0; len])
    }

    /// Small-norm random initialization cooperating with the norm
    /// regularizer used during training.
    pub fn random<R: Rng>(len: usize, std: f64, rng: &mut R) -> LatentCode {
        LatentCode((0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

/// Mean of the prior's embeddings: the center of the learned embedding
/// space, used to initialize the code of an unseen shape.
pub fn init_code_from_prior(prior_codes: &[LatentCode]) -> Result<LatentCode> {
    let Some(first) = prior_codes.first() else {
        return Err(Error::EmptySet);
    };
    let len = first.len();
    for c in prior_codes {
        if c.len() != len {
            return Err(Error::CodeLengthMismatch { got: c.len(), expected: len });
        }
    }
    let inv = 1.0 / prior_codes.len() as f64;
    let mut mean = vec![0.0; len];
    for c in prior_codes {
        for (m, v) in mean.iter_mut().zip(&c.0) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m *= inv;
    }
    Ok(LatentCode(mean))
}

/// Fully connected decoder mapping `[q; c]` to a signed distance.
///
/// `layer_sizes` is the full chain including the input width `3 + code_len`
/// and the scalar output. An optional skip connection re-concatenates the
/// input in front of one hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfNetwork {
    layer_sizes: Vec<usize>,
    activation: Activation,
    skip_at: Option<usize>,
    params: Vec<f64>,
}

/// Architecture knobs; the weights come from [`SdfNetwork::init`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub code_len: usize,
    pub hidden_width: usize,
    /// Number of weight layers, counting the output projection.
    pub depth: usize,
    pub activation: Activation,
    pub skip_at: Option<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            code_len: 256,
            hidden_width: 128,
            depth: 8,
            activation: Activation::default(),
            skip_at: None,
        }
    }
}

impl SdfNetwork {
    /// Random initialization (scaled normal weights, zero biases).
    pub fn init<R: Rng>(config: &NetConfig, rng: &mut R) -> SdfNetwork {
        assert!(config.depth >= 2, "need at least one hidden layer");
        assert!(config.hidden_width >= 1 && config.code_len >= 1);
        if let Some(s) = config.skip_at {
            assert!(s >= 1 && s < config.depth, "skip layer out of range");
        }
        let d_in = 3 + config.code_len;
        let mut layer_sizes = Vec::with_capacity(config.depth + 1);
        layer_sizes.push(d_in);
        for _ in 1..config.depth {
            layer_sizes.push(config.hidden_width);
        }
        layer_sizes.push(1);

        let mut net = SdfNetwork {
            layer_sizes,
            activation: config.activation,
            skip_at: config.skip_at,
            params: Vec::new(),
        };
        let total: usize = (0..net.layer_count()).map(|l| net.layer_param_count(l)).sum();
        net.params.reserve(total);
        for l in 0..net.layer_count() {
            let (fan_in, fan_out) = (net.in_dim(l), net.out_dim(l));
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                net.params.push(std * rng.sample::<f64, _>(StandardNormal));
            }
            for _ in 0..fan_out {
                net.params.push(0.0);
            }
        }
        net
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn skip_at(&self) -> Option<usize> {
        self.skip_at
    }

    pub fn code_len(&self) -> usize {
        self.layer_sizes[0] - 3
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Weight layers (transitions), one fewer than `layer_sizes.len()`.
    fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Input width of layer `l`, accounting for the skip concatenation.
    fn in_dim(&self, l: usize) -> usize {
        let base = self.layer_sizes[l];
        if self.skip_at == Some(l) {
            base + self.layer_sizes[0]
        } else {
            base
        }
    }

    fn out_dim(&self, l: usize) -> usize {
        self.layer_sizes[l + 1]
    }

    fn layer_param_count(&self, l: usize) -> usize {
        self.in_dim(l) * self.out_dim(l) + self.out_dim(l)
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|i| self.layer_param_count(i)).sum()
    }

    /// Architecture summary used in checkpoint mismatch diagnostics.
    pub fn describe(&self) -> String {
        format!(
            "layers {:?}, activation {:?}, skip {:?}",
            self.layer_sizes, self.activation, self.skip_at
        )
    }

    fn check_code(&self, code: &LatentCode) -> Result<()> {
        if code.len() != self.code_len() {
            return Err(Error::CodeLengthMismatch { got: code.len(), expected: self.code_len() });
        }
        Ok(())
    }

    /// Tape-free field evaluation. Deterministic and bitwise identical to
    /// the staged forward pass.
    pub fn evaluate(&self, code: &LatentCode, q: Point3) -> Result<f64> {
        self.check_code(code)?;
        let mut x: Vec<f64> = Vec::with_capacity(self.layer_sizes[0].max(self.in_dim(0)));
        x.extend_from_slice(&q);
        x.extend_from_slice(&code.0);
        let input = x.clone();
        let mut next: Vec<f64> = Vec::new();
        for l in 0..self.layer_count() {
            if self.skip_at == Some(l) {
                x.extend_from_slice(&input);
            }
            let (fan_in, fan_out) = (self.in_dim(l), self.out_dim(l));
            let base = self.layer_offset(l);
            next.clear();
            for j in 0..fan_out {
                let row = &self.params[base + j * fan_in..base + (j + 1) * fan_in];
                let mut acc = 0.0;
                for (w, xv) in row.iter().zip(&x) {
                    acc += w * xv;
                }
                acc += self.params[base + fan_in * fan_out + j];
                next.push(if l + 1 < self.layer_count() {
                    self.activation.apply(acc)
                } else {
                    acc
                });
            }
            std::mem::swap(&mut x, &mut next);
        }
        Ok(x[0])
    }

    /// Register parameters and code as tape leaves (parameters first, then
    /// code), returning the handle used to build forward passes.
    ///
    /// The leaf layout is what [`StagedNet::param_gradients`] and
    /// [`StagedNet::code_gradients`] slice out of a backward pass.
    pub fn stage(&self, tape: &mut Tape, code: &LatentCode) -> Result<StagedNet> {
        self.check_code(code)?;
        let param_base = tape.leaf_slice(&self.params);
        let code_base = tape.leaf_slice(&code.0);
        Ok(StagedNet {
            param_base,
            code_base,
            param_count: self.params.len(),
            code_len: code.len(),
            code_count: 1,
        })
    }

    /// Stage the parameters together with a whole embedding table (leaf
    /// layout: parameters, then codes in order). Used by training loops that
    /// update several shapes' codes in one step.
    pub fn stage_many(&self, tape: &mut Tape, codes: &[LatentCode]) -> Result<StagedNet> {
        if codes.is_empty() {
            return Err(Error::EmptySet);
        }
        for c in codes {
            self.check_code(c)?;
        }
        let param_base = tape.leaf_slice(&self.params);
        let mut code_base = None;
        for c in codes {
            let base = tape.leaf_slice(&c.0);
            code_base.get_or_insert(base);
        }
        Ok(StagedNet {
            param_base,
            code_base: code_base.expect("codes is non-empty"),
            param_count: self.params.len(),
            code_len: self.code_len(),
            code_count: codes.len(),
        })
    }
}

/// Handle to one staged copy of network parameters plus one or more codes
/// on a tape.
#[derive(Clone, Copy, Debug)]
pub struct StagedNet {
    param_base: NodeId,
    code_base: NodeId,
    param_count: usize,
    code_len: usize,
    code_count: usize,
}

impl StagedNet {
    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn code_count(&self) -> usize {
        self.code_count
    }

    fn code_node(&self, code_idx: usize, i: usize) -> NodeId {
        debug_assert!(code_idx < self.code_count && i < self.code_len);
        NodeId(self.code_base.0 + (code_idx * self.code_len + i) as u32)
    }

    /// Build the forward pass for one query given as three tape nodes.
    /// Returns the signed-distance node.
    pub fn forward(&self, net: &SdfNetwork, tape: &mut Tape, q: [NodeId; 3]) -> NodeId {
        self.forward_shape(net, tape, 0, q)
    }

    /// Forward pass conditioned on the `code_idx`-th staged code.
    pub fn forward_shape(
        &self,
        net: &SdfNetwork,
        tape: &mut Tape,
        code_idx: usize,
        q: [NodeId; 3],
    ) -> NodeId {
        let mut x: Vec<NodeId> = Vec::with_capacity(net.in_dim(0));
        x.extend_from_slice(&q);
        for i in 0..self.code_len {
            x.push(self.code_node(code_idx, i));
        }
        let input = x.clone();
        let mut next: Vec<NodeId> = Vec::new();
        for l in 0..net.layer_count() {
            if net.skip_at == Some(l) {
                x.extend_from_slice(&input);
            }
            let (fan_in, fan_out) = (net.in_dim(l), net.out_dim(l));
            let base = net.layer_offset(l);
            next.clear();
            for j in 0..fan_out {
                let row_first = NodeId(self.param_base.0 + (base + j * fan_in) as u32);
                let dot = tape.dot_range(row_first, &x);
                let bias = NodeId(self.param_base.0 + (base + fan_in * fan_out + j) as u32);
                let z = tape.add(dot, bias);
                next.push(if l + 1 < net.layer_count() {
                    apply_activation(tape, net.activation, z)
                } else {
                    z
                });
            }
            std::mem::swap(&mut x, &mut next);
        }
        x[0]
    }

    /// Forward pass for a fixed query position (constants on the tape).
    pub fn forward_at(&self, net: &SdfNetwork, tape: &mut Tape, q: Point3) -> ([NodeId; 3], NodeId) {
        self.forward_shape_at(net, tape, 0, q)
    }

    /// Fixed-position forward pass against the `code_idx`-th staged code.
    pub fn forward_shape_at(
        &self,
        net: &SdfNetwork,
        tape: &mut Tape,
        code_idx: usize,
        q: Point3,
    ) -> ([NodeId; 3], NodeId) {
        let qn = [tape.constant(q[0]), tape.constant(q[1]), tape.constant(q[2])];
        let s = self.forward_shape(net, tape, code_idx, qn);
        (qn, s)
    }

    /// `weight * |c|²` of the `code_idx`-th staged code as a tape node.
    pub fn code_penalty(&self, tape: &mut Tape, code_idx: usize, weight: f64) -> NodeId {
        let xs: Vec<NodeId> = (0..self.code_len).map(|i| self.code_node(code_idx, i)).collect();
        let sq = tape.dot(&xs, &xs);
        let w = tape.constant(weight);
        tape.mul(sq, w)
    }

    /// Spatial gradient nodes `∇_q f` for a previously built forward pass.
    /// The gradient stays differentiable w.r.t. parameters and code.
    pub fn spatial_gradient_nodes(
        &self,
        tape: &mut Tape,
        q: [NodeId; 3],
        s: NodeId,
    ) -> Result<[NodeId; 3]> {
        let g = tape.gradient_nodes(s, &q)?;
        Ok([g[0], g[1], g[2]])
    }

    /// Pull a query onto the zero-level set: `q − s·∇f/|∇f|`, entirely in
    /// tape nodes. Rejects queries whose gradient norm is below
    /// [`MIN_GRADIENT_NORM`]; the caller rolls the tape back and redraws.
    pub fn pull_nodes(
        &self,
        net: &SdfNetwork,
        tape: &mut Tape,
        q: [NodeId; 3],
        s: NodeId,
    ) -> Result<[NodeId; 3]> {
        let _ = net;
        pull_query(tape, q, s)
    }

    /// Gradient slice for the network parameters out of a full leaf-gradient
    /// vector (as returned by [`Tape::backward`]).
    pub fn param_gradients<'g>(&self, leaf_grads: &'g [f64]) -> &'g [f64] {
        &leaf_grads[..self.param_count]
    }

    /// Gradient slice for every staged code, flattened in staging order.
    pub fn code_gradients<'g>(&self, leaf_grads: &'g [f64]) -> &'g [f64] {
        &leaf_grads[self.param_count..self.param_count + self.code_count * self.code_len]
    }
}

/// The pulling operation on any taped scalar field: given query nodes and
/// the field value node, append `q − s·∇f/|∇f|` and return the projected
/// point's nodes. The whole expression is tape-resident, so losses over
/// pulled points backpropagate through the field gradient.
pub fn pull_query(tape: &mut Tape, q: [NodeId; 3], s: NodeId) -> Result<[NodeId; 3]> {
    let g = tape.gradient_nodes(s, &q)?;
    let norm = tape.norm3(g[0], g[1], g[2]);
    if tape.value(norm) < MIN_GRADIENT_NORM {
        return Err(Error::VanishingGradient(
            tape.value(q[0]),
            tape.value(q[1]),
            tape.value(q[2]),
        ));
    }
    let mut pulled = [NodeId(0); 3];
    for axis in 0..3 {
        let sg = tape.mul(s, g[axis]);
        let step = tape.div(sg, norm);
        pulled[axis] = tape.sub(q[axis], step);
    }
    Ok(pulled)
}

fn apply_activation(tape: &mut Tape, activation: Activation, z: NodeId) -> NodeId {
    match activation {
        Activation::Softplus { beta } => {
            let cb = tape.constant(beta);
            let scaled = tape.mul(z, cb);
            let sp = tape.softplus(scaled);
            let inv = tape.constant(1.0 / beta);
            tape.mul(sp, inv)
        }
        Activation::Tanh => tape.tanh(z),
        Activation::Relu => tape.relu(z),
    }
}

impl SdfNetwork {
    /// Spatial gradient `∇_q f(q, c)` as plain values.
    pub fn spatial_gradient(&self, code: &LatentCode, q: Point3) -> Result<Point3> {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape, code)?;
        let (qn, s) = staged.forward_at(self, &mut tape, q);
        let g = staged.spatial_gradient_nodes(&mut tape, qn, s)?;
        Ok([tape.value(g[0]), tape.value(g[1]), tape.value(g[2])])
    }

    /// Project one point onto the zero-level set along the field gradient.
    pub fn pull_to_surface(&self, code: &LatentCode, q: Point3) -> Result<Point3> {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape, code)?;
        let (qn, s) = staged.forward_at(self, &mut tape, q);
        let pulled = staged.pull_nodes(self, &mut tape, qn, s)?;
        Ok([tape.value(pulled[0]), tape.value(pulled[1]), tape.value(pulled[2])])
    }

    /// Replace every point with its projection onto the zero-level set.
    /// Points with a vanishing field gradient are passed through unchanged
    /// and counted in the returned warning total.
    pub fn denoise_points(&self, code: &LatentCode, pc: &PointCloud) -> Result<(PointCloud, usize)> {
        self.check_code(code)?;
        let mut tape = Tape::new();
        let mut out = Vec::with_capacity(pc.len());
        let mut warnings = 0usize;
        for &p in pc.points() {
            tape.reset();
            let staged = self.stage(&mut tape, code)?;
            let (qn, s) = staged.forward_at(self, &mut tape, p);
            match staged.pull_nodes(self, &mut tape, qn, s) {
                Ok(pulled) => out.push([
                    tape.value(pulled[0]),
                    tape.value(pulled[1]),
                    tape.value(pulled[2]),
                ]),
                Err(Error::VanishingGradient(..)) => {
                    warnings += 1;
                    out.push(p);
                }
                Err(e) => return Err(e),
            }
        }
        Ok((PointCloud::new(out, Provenance::Denoised)?, warnings))
    }
}

// ── Checkpoint serialization ────────────────────────────────────────────
//
// Little-endian binary: 4-byte magic, version byte, activation tag + beta,
// skip byte, layer sizes, flat f64 parameters, then the embedding table.

const MAGIC: &[u8; 4] = b"NSDF";
const VERSION: u8 = 1;

pub fn save_checkpoint(path: &Path, net: &SdfNetwork, codes: &[LatentCode]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(64 + 8 * net.param_count());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(net.activation.tag());
    let beta = match net.activation {
        Activation::Softplus { beta } => beta,
        _ => 0.0,
    };
    buf.extend_from_slice(&beta.to_le_bytes());
    buf.push(match net.skip_at {
        Some(s) => s as u8,
        None => u8::MAX,
    });
    buf.extend_from_slice(&(net.layer_sizes.len() as u32).to_le_bytes());
    for &s in &net.layer_sizes {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    for p in &net.params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let code_len = codes.first().map(|c| c.len()).unwrap_or(net.code_len());
    buf.extend_from_slice(&(codes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(code_len as u32).to_le_bytes());
    for c in codes {
        if c.len() != code_len {
            return Err(Error::CodeLengthMismatch { got: c.len(), expected: code_len });
        }
        for v in &c.0 {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(SdfNetwork, Vec<LatentCode>)> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: &str| Error::Parse { format: "checkpoint", detail: detail.into() };
    let mut cur = Cursor { data: &data, pos: 0 };

    if cur.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    if cur.u8()? != VERSION {
        return Err(bad("unsupported version"));
    }
    let tag = cur.u8()?;
    let beta = cur.f64()?;
    let activation = match tag {
        0 => Activation::Softplus { beta },
        1 => Activation::Tanh,
        2 => Activation::Relu,
        _ => return Err(bad("unknown activation tag")),
    };
    let skip_at = match cur.u8()? {
        u8::MAX => None,
        s => Some(s as usize),
    };
    let n_sizes = cur.u32()? as usize;
    if !(3..=64).contains(&n_sizes) {
        return Err(bad("implausible layer count"));
    }
    let mut layer_sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        layer_sizes.push(cur.u32()? as usize);
    }
    if layer_sizes[0] < 4 || *layer_sizes.last().unwrap() != 1 {
        return Err(bad("implausible layer sizes"));
    }

    let mut net = SdfNetwork { layer_sizes, activation, skip_at, params: Vec::new() };
    let expected: usize = (0..net.layer_count()).map(|l| net.layer_param_count(l)).sum();
    let n_params = cur.u64()? as usize;
    if n_params != expected {
        return Err(Error::ParamLengthMismatch { got: n_params, expected });
    }
    net.params = cur.f64_vec(n_params)?;

    let n_codes = cur.u32()? as usize;
    let code_len = cur.u32()? as usize;
    if code_len != net.code_len() {
        return Err(Error::CodeLengthMismatch { got: code_len, expected: net.code_len() });
    }
    let mut codes = Vec::with_capacity(n_codes);
    for _ in 0..n_codes {
        codes.push(LatentCode(cur.f64_vec(code_len)?));
    }
    Ok((net, codes))
}

struct Cursor<'d> {
    data: &'d [u8],
    pos: usize,
}

impl<'d> Cursor<'d> {
    fn take(&mut self, n: usize) -> Result<&'d [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Parse { format: "checkpoint", detail: "truncated".into() });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(8 * n)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
