//! Exact k-nearest-neighbor search over a fixed point set.
//!
//! Balanced kd-tree built by median splits on the widest axis. Results are
//! exact and deterministic: neighbors sort by ascending distance with ties
//! broken by ascending point index, so the output matches an exhaustive scan
//! ordered the same way.

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::vec3::{self, Point3};

struct Node {
    /// Index into `points`.
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

const NIL: i32 = -1;

/// Immutable spatial index; concurrent reads are safe once built.
pub struct KnnIndex {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    root: i32,
}

/// Max-heap entry ordered worst-first: larger distance, then larger index.
#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist_sq: f64,
    index: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist_sq
            .partial_cmp(&other.dist_sq)
            .expect("distances are finite")
            .then(self.index.cmp(&other.index))
    }
}

impl KnnIndex {
    pub fn build(cloud: &PointCloud) -> KnnIndex {
        Self::from_points(cloud.points())
    }

    pub fn from_points(points: &[Point3]) -> KnnIndex {
        let points = points.to_vec();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_recursive(&points, &mut order, &mut nodes);
        KnnIndex { points, nodes, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    /// The `k` nearest indexed points to `query`, ascending by Euclidean
    /// distance, ties broken by ascending point index.
    pub fn knn(&self, query: Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::KOutOfRange { k, n: self.points.len() });
        }
        let mut heap: Vec<Candidate> = Vec::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap;
        out.sort_unstable();
        Ok(out.into_iter().map(|c| (c.index as usize, c.dist_sq.sqrt())).collect())
    }

    /// The single nearest indexed point.
    pub fn nearest(&self, query: Point3) -> Result<(usize, f64)> {
        Ok(self.knn(query, 1)?[0])
    }

    /// All indexed points within `radius` of `query`, sorted ascending by
    /// (distance, index).
    pub fn within_radius(&self, query: Point3, radius: f64) -> Vec<(usize, f64)> {
        let mut hits = Vec::new();
        self.radius_search(self.root, query, radius * radius, &mut hits);
        hits.sort_unstable();
        hits.into_iter().map(|c| (c.index as usize, c.dist_sq.sqrt())).collect()
    }

    fn search(&self, node: i32, query: Point3, k: usize, heap: &mut Vec<Candidate>) {
        if node == NIL {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.points[n.point as usize];
        let cand = Candidate { dist_sq: vec3::dist_sq(query, p), index: n.point };
        if heap.len() < k {
            heap_push(heap, cand);
        } else if cand < heap[0] {
            heap_replace_root(heap, cand);
        }

        let axis = n.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search(near, query, k, heap);
        // The far half can still hold closer points, or equal-distance points
        // with smaller indices that must win the tie-break.
        if heap.len() < k || delta * delta <= heap[0].dist_sq {
            self.search(far, query, k, heap);
        }
    }

    fn radius_search(&self, node: i32, query: Point3, radius_sq: f64, hits: &mut Vec<Candidate>) {
        if node == NIL {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.points[n.point as usize];
        let d = vec3::dist_sq(query, p);
        if d <= radius_sq {
            hits.push(Candidate { dist_sq: d, index: n.point });
        }
        let axis = n.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.radius_search(near, query, radius_sq, hits);
        if delta * delta <= radius_sq {
            self.radius_search(far, query, radius_sq, hits);
        }
    }
}

fn build_recursive(points: &[Point3], order: &mut [u32], nodes: &mut Vec<Node>) -> i32 {
    if order.is_empty() {
        return NIL;
    }
    // Split on the axis with the widest spread for balance on skewed data.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3).max_by(|&a, &b| {
        (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).expect("finite spread")
    }).unwrap();

    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        let ka = (points[a as usize][axis], a);
        let kb = (points[b as usize][axis], b);
        ka.partial_cmp(&kb).expect("finite coordinates")
    });
    let point = order[mid];

    let id = nodes.len() as i32;
    nodes.push(Node { point, axis: axis as u8, left: NIL, right: NIL });
    // Recurse after reserving the slot so child links can be patched in.
    let (left_ids, rest) = order.split_at_mut(mid);
    let right_ids = &mut rest[1..];
    let left = build_recursive(points, left_ids, nodes);
    let right = build_recursive(points, right_ids, nodes);
    nodes[id as usize].left = left;
    nodes[id as usize].right = right;
    id
}

fn heap_push(heap: &mut Vec<Candidate>, cand: Candidate) {
    heap.push(cand);
    let mut i = heap.len() - 1;
    while i > 0 {
        let parent = (i - 1) / 2;
        if heap[parent] < heap[i] {
            heap.swap(parent, i);
            i = parent;
        } else {
            break;
        }
    }
}

fn heap_replace_root(heap: &mut [Candidate], cand: Candidate) {
    heap[0] = cand;
    let mut i = 0;
    loop {
        let (l, r) = (2 * i + 1, 2 * i + 2);
        let mut largest = i;
        if l < heap.len() && heap[l] > heap[largest] {
            largest = l;
        }
        if r < heap.len() && heap[r] > heap[largest] {
            largest = r;
        }
        if largest == i {
            break;
        }
        heap.swap(i, largest);
        i = largest;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Provenance;
    use crate::testkit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<Point3>) -> PointCloud {
        PointCloud::new(points, Provenance::Clean).unwrap()
    }

    #[test]
    fn colinear_ordering() {
        let pc = cloud(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let index = KnnIndex::build(&pc);
        let hits = index.knn([0.9, 0.0, 0.0], 2).unwrap();
        assert_eq!(hits[0].0, 1);
        assert_eq!(hits[1].0, 0);
    }

    #[test]
    fn self_query_is_distance_zero() {
        let pc = cloud(vec![[0.3, -0.2, 0.9], [1.0, 1.0, 1.0]]);
        let index = KnnIndex::build(&pc);
        let hits = index.knn([0.3, -0.2, 0.9], 1).unwrap();
        assert_eq!(hits[0], (0, 0.0));
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let pc = cloud(vec![[0.0; 3]]);
        let index = KnnIndex::build(&pc);
        assert!(matches!(index.knn([0.0; 3], 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(index.knn([0.0; 3], 2), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn matches_exhaustive_scan_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let points: Vec<Point3> =
            (0..200).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let pc = cloud(points.clone());
        let index = KnnIndex::build(&pc);
        for _ in 0..50 {
            let q = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
            let got = index.knn(q, 10).unwrap();
            let want = testkit::knn_scan(&points, q, 10);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn ties_break_by_index() {
        // Four duplicate positions: k = 2 must pick the lowest indices.
        let pc = cloud(vec![[1.0, 0.0, 0.0]; 4]);
        let index = KnnIndex::build(&pc);
        let hits = index.knn([0.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn radius_query_collects_everything_in_range() {
        let pc = cloud(vec![[0.0; 3], [0.05, 0.0, 0.0], [0.2, 0.0, 0.0], [0.0, 0.09, 0.0]]);
        let index = KnnIndex::build(&pc);
        let hits = index.within_radius([0.0; 3], 0.1);
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 1, 3]);
    }
}
