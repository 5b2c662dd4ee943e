//! Local region selection and query sampling around noisy points.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{KnnIndex, PointCloud};
use crate::vec3::Point3;

/// Neighbor rank whose distance sets the query-sampling standard deviation
/// around each point (the point itself counts as rank 1 at distance 0).
pub const SCALE_NEIGHBOR_RANK: usize = 51;

/// Lower clamp for sampling scales so duplicated points never produce a
/// zero-width Gaussian.
pub const MIN_SAMPLING_SCALE: f64 = 1e-6;

/// How many random cell/center draws a splitting strategy makes before
/// giving up on finding a populated region.
const SPLIT_RETRY_LIMIT: usize = 64;

/// A patch of the cloud: a center point, its member point indices, and a
/// per-member Gaussian scale for query sampling.
#[derive(Clone, Debug)]
pub struct LocalRegion {
    pub center: usize,
    pub members: Vec<usize>,
    pub sampling_scales: Vec<f64>,
}

impl LocalRegion {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Region splitting strategies. The knn form is the default; the others
/// exist so their effect on reconstruction quality can be measured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitStrategy {
    /// K nearest neighbors of a randomly drawn center point.
    SphereKnn { k: usize },
    /// Every point within a fixed radius of a randomly drawn center point.
    SphereFixed { radius: f64 },
    /// All points inside one randomly drawn cell of a uniform grid over the
    /// cloud's bounding box.
    Voxel { grid: usize },
}

impl Default for SplitStrategy {
    fn default() -> Self {
        SplitStrategy::SphereKnn { k: 1000 }
    }
}

/// Distance from point `i` to its `SCALE_NEIGHBOR_RANK`-th nearest neighbor
/// in the full cloud (self included). Clouds smaller than the rank fall back
/// to the farthest available neighbor.
pub fn sampling_scale(index: &KnnIndex, point: Point3, cloud_size: usize) -> f64 {
    let rank = SCALE_NEIGHBOR_RANK.min(cloud_size);
    let neighbors = index.knn(point, rank).expect("rank clamped to cloud size");
    neighbors.last().expect("rank >= 1").1.max(MIN_SAMPLING_SCALE)
}

/// Sampling scale of every cloud point, for optimization loops that build
/// thousands of regions over one fixed cloud.
pub fn compute_sampling_scales(pc: &PointCloud, index: &KnnIndex) -> Vec<f64> {
    (0..pc.len()).map(|i| sampling_scale(index, pc.point(i), pc.len())).collect()
}

fn region_from_members(
    pc: &PointCloud,
    index: &KnnIndex,
    center: usize,
    members: Vec<usize>,
) -> LocalRegion {
    let sampling_scales = members
        .iter()
        .map(|&m| sampling_scale(index, pc.point(m), pc.len()))
        .collect();
    LocalRegion { center, members, sampling_scales }
}

/// Same region construction with scales looked up from a precomputed table.
pub fn region_with_scales(center: usize, members: Vec<usize>, scales: &[f64]) -> LocalRegion {
    let sampling_scales = members.iter().map(|&m| scales[m]).collect();
    LocalRegion { center, members, sampling_scales }
}

/// Draw a uniformly random center point and collect its `k` nearest points
/// (the center itself included at distance 0).
pub fn sample_local_region<R: Rng>(
    pc: &PointCloud,
    index: &KnnIndex,
    k: usize,
    rng: &mut R,
) -> Result<LocalRegion> {
    if k > pc.len() {
        return Err(Error::RegionTooLarge { k, n: pc.len() });
    }
    let center = rng.gen_range(0..pc.len());
    let members: Vec<usize> =
        index.knn(pc.point(center), k)?.into_iter().map(|(i, _)| i).collect();
    Ok(region_from_members(pc, index, center, members))
}

/// One query position around the region: pick a member uniformly, then draw
/// from an isotropic Gaussian centered at it with the member's stored scale.
pub fn sample_query<R: Rng>(region: &LocalRegion, pc: &PointCloud, rng: &mut R) -> Point3 {
    debug_assert!(!region.is_empty(), "cannot sample around an empty region");
    let pick = rng.gen_range(0..region.members.len());
    let p = pc.point(region.members[pick]);
    let sigma = region.sampling_scales[pick];
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    let dz: f64 = rng.sample(StandardNormal);
    [p[0] + sigma * dx, p[1] + sigma * dy, p[2] + sigma * dz]
}

/// `u` queries drawn by repeated [`sample_query`].
pub fn sample_queries<R: Rng>(
    region: &LocalRegion,
    pc: &PointCloud,
    u: usize,
    rng: &mut R,
) -> Vec<Point3> {
    assert!(u >= 1, "query count must be at least 1");
    assert!(!region.is_empty(), "cannot sample around an empty region");
    (0..u).map(|_| sample_query(region, pc, rng)).collect()
}

/// `count` distinct draws from `0..n` by partial Fisher–Yates; membership
/// and order are functions of the rng stream alone.
pub fn sample_without_replacement<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    assert!(count <= n, "cannot draw {count} distinct items from {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

/// Build one region under the chosen strategy.
///
/// Voxel cells are drawn uniformly over the whole grid and redrawn (up to a
/// bounded retry count) when the cell holds no points.
pub fn split_strategy<R: Rng>(
    pc: &PointCloud,
    index: &KnnIndex,
    strategy: SplitStrategy,
    rng: &mut R,
) -> Result<LocalRegion> {
    split_region(pc, index, strategy, None, rng)
}

/// [`split_strategy`] with member scales looked up from a precomputed table
/// instead of fresh neighbor queries; same regions, same rng consumption.
pub fn split_strategy_scaled<R: Rng>(
    pc: &PointCloud,
    index: &KnnIndex,
    strategy: SplitStrategy,
    scales: &[f64],
    rng: &mut R,
) -> Result<LocalRegion> {
    split_region(pc, index, strategy, Some(scales), rng)
}

fn split_region<R: Rng>(
    pc: &PointCloud,
    index: &KnnIndex,
    strategy: SplitStrategy,
    scales: Option<&[f64]>,
    rng: &mut R,
) -> Result<LocalRegion> {
    let finish = |center: usize, members: Vec<usize>| match scales {
        Some(table) => Ok(region_with_scales(center, members, table)),
        None => Ok(region_from_members(pc, index, center, members)),
    };
    match strategy {
        SplitStrategy::SphereKnn { k } => {
            assert!(k >= 1, "region size must be at least 1");
            let k = k.min(pc.len());
            let center = rng.gen_range(0..pc.len());
            let members: Vec<usize> =
                index.knn(pc.point(center), k)?.into_iter().map(|(i, _)| i).collect();
            finish(center, members)
        }
        SplitStrategy::SphereFixed { radius } => {
            assert!(radius > 0.0, "radius must be positive");
            let center = rng.gen_range(0..pc.len());
            let members: Vec<usize> = index
                .within_radius(pc.point(center), radius)
                .into_iter()
                .map(|(i, _)| i)
                .collect();
            // The center is within radius of itself, so members is non-empty.
            finish(center, members)
        }
        SplitStrategy::Voxel { grid } => {
            assert!(grid >= 1, "voxel grid must have at least one cell per axis");
            let (lo, hi) = pc.bounds();
            let cell = |p: Point3| -> [usize; 3] {
                let mut c = [0usize; 3];
                for a in 0..3 {
                    let extent = hi[a] - lo[a];
                    let t = if extent > 0.0 { (p[a] - lo[a]) / extent } else { 0.0 };
                    c[a] = ((t * grid as f64) as usize).min(grid - 1);
                }
                c
            };
            for _ in 0..SPLIT_RETRY_LIMIT {
                let target = [
                    rng.gen_range(0..grid),
                    rng.gen_range(0..grid),
                    rng.gen_range(0..grid),
                ];
                let members: Vec<usize> = (0..pc.len())
                    .filter(|&i| cell(pc.point(i)) == target)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                // Deterministic center: the member closest to the cell midpoint.
                let mid = [
                    lo[0] + (hi[0] - lo[0]) * (target[0] as f64 + 0.5) / grid as f64,
                    lo[1] + (hi[1] - lo[1]) * (target[1] as f64 + 0.5) / grid as f64,
                    lo[2] + (hi[2] - lo[2]) * (target[2] as f64 + 0.5) / grid as f64,
                ];
                let center = *members
                    .iter()
                    .min_by(|&&a, &&b| {
                        let da = crate::vec3::dist_sq(pc.point(a), mid);
                        let db = crate::vec3::dist_sq(pc.point(b), mid);
                        (da, a).partial_cmp(&(db, b)).expect("finite distances")
                    })
                    .expect("members is non-empty");
                return finish(center, members);
            }
            Err(Error::EmptyRegion { retries: SPLIT_RETRY_LIMIT })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Provenance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_sphere_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                loop {
                    let v: Point3 = [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ];
                    let n2 = crate::vec3::norm_sq(v);
                    if n2 > 1e-6 && n2 <= 1.0 {
                        break crate::vec3::scale(v, 1.0 / n2.sqrt());
                    }
                }
            })
            .collect();
        PointCloud::new(points, Provenance::Clean).unwrap()
    }

    #[test]
    fn full_size_region_is_whole_cloud() {
        let pc = unit_sphere_cloud(64, 1);
        let index = KnnIndex::build(&pc);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let region = sample_local_region(&pc, &index, 64, &mut rng).unwrap();
        let mut members = region.members.clone();
        members.sort_unstable();
        assert_eq!(members, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let pc = unit_sphere_cloud(256, 3);
        let index = KnnIndex::build(&pc);
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let ra = sample_local_region(&pc, &index, 32, &mut a).unwrap();
        let rb = sample_local_region(&pc, &index, 32, &mut b).unwrap();
        assert_eq!(ra.center, rb.center);
        assert_eq!(ra.members, rb.members);
        assert_eq!(ra.sampling_scales, rb.sampling_scales);
        let qa = sample_queries(&ra, &pc, 100, &mut a);
        let qb = sample_queries(&rb, &pc, 100, &mut b);
        assert_eq!(qa, qb, "query sets must be byte-identical under a fixed seed");
    }

    #[test]
    fn region_too_large_is_rejected() {
        let pc = unit_sphere_cloud(10, 4);
        let index = KnnIndex::build(&pc);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_local_region(&pc, &index, 11, &mut rng),
            Err(Error::RegionTooLarge { .. })
        ));
    }

    #[test]
    fn knn_region_is_a_cap_on_the_sphere() {
        let pc = unit_sphere_cloud(2000, 5);
        let index = KnnIndex::build(&pc);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let region = sample_local_region(&pc, &index, 500, &mut rng).unwrap();
        let c = pc.point(region.center);
        let max_d = region
            .members
            .iter()
            .map(|&m| crate::vec3::dist(c, pc.point(m)))
            .fold(0.0f64, f64::max);
        // A quarter of the sphere stays well inside a hemispheric cap.
        assert!(max_d < 1.0, "max member distance {max_d} should be under diameter/2");
        assert!(region.members.contains(&region.center));
        assert!(region.sampling_scales.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn small_cloud_scale_falls_back_to_farthest_neighbor() {
        let pc = unit_sphere_cloud(10, 8);
        let index = KnnIndex::build(&pc);
        let scale = sampling_scale(&index, pc.point(0), pc.len());
        let all = index.knn(pc.point(0), 10).unwrap();
        assert_eq!(scale, all.last().unwrap().1.max(MIN_SAMPLING_SCALE));
    }

    #[test]
    fn degenerate_scale_is_clamped() {
        // All points identical: every neighbor distance is 0.
        let pc = PointCloud::new(vec![[0.5, 0.5, 0.5]; 60], Provenance::Clean).unwrap();
        let index = KnnIndex::build(&pc);
        let scale = sampling_scale(&index, pc.point(0), pc.len());
        assert_eq!(scale, MIN_SAMPLING_SCALE);
    }

    #[test]
    fn queries_concentrate_at_clamp_floor() {
        let pc = PointCloud::new(vec![[0.25, -0.25, 0.0]; 60], Provenance::Clean).unwrap();
        let index = KnnIndex::build(&pc);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let region = sample_local_region(&pc, &index, 60, &mut rng).unwrap();
        let queries = sample_queries(&region, &pc, 200, &mut rng);
        for q in queries {
            assert!(crate::vec3::dist(q, [0.25, -0.25, 0.0]) < 1e-5);
        }
    }

    #[test]
    fn query_spread_matches_scale() {
        let pc = PointCloud::new(vec![[0.0; 3], [10.0, 0.0, 0.0]], Provenance::Clean).unwrap();
        let index = KnnIndex::build(&pc);
        let sigma = 10.0; // distance to the only other point
        let region = LocalRegion {
            center: 0,
            members: vec![0],
            sampling_scales: vec![sampling_scale(&index, pc.point(0), pc.len())],
        };
        assert_eq!(region.sampling_scales[0], sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let queries = sample_queries(&region, &pc, 100_000, &mut rng);
        for a in 0..3 {
            let mean: f64 = queries.iter().map(|q| q[a]).sum::<f64>() / queries.len() as f64;
            let var: f64 =
                queries.iter().map(|q| (q[a] - mean).powi(2)).sum::<f64>() / queries.len() as f64;
            assert!(
                (var.sqrt() - sigma).abs() / sigma < 0.03,
                "axis {a}: std {} vs sigma {sigma}",
                var.sqrt()
            );
        }
    }

    #[test]
    fn sphere_knn_strategy_delegates() {
        let pc = unit_sphere_cloud(300, 11);
        let index = KnnIndex::build(&pc);
        let mut a = ChaCha8Rng::seed_from_u64(12);
        let mut b = ChaCha8Rng::seed_from_u64(12);
        let direct = sample_local_region(&pc, &index, 50, &mut a).unwrap();
        let via =
            split_strategy(&pc, &index, SplitStrategy::SphereKnn { k: 50 }, &mut b).unwrap();
        assert_eq!(direct.members, via.members);
    }

    #[test]
    fn small_cloud_fixed_radius_takes_everything() {
        // Cloud diameter under 0.2 with radius 0.1: the region is the cloud.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let points: Vec<Point3> = (0..40)
            .map(|_| {
                [
                    rng.gen_range(-0.04..0.04),
                    rng.gen_range(-0.04..0.04),
                    rng.gen_range(-0.04..0.04),
                ]
            })
            .collect();
        let pc = PointCloud::new(points, Provenance::Clean).unwrap();
        let index = KnnIndex::build(&pc);
        let region =
            split_strategy(&pc, &index, SplitStrategy::SphereFixed { radius: 0.1 }, &mut rng)
                .unwrap();
        assert_eq!(region.len(), 40);
    }

    #[test]
    fn voxel_grid_partitions_cube_corners() {
        let corners: Vec<Point3> = (0..8)
            .map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
            .collect();
        let pc = PointCloud::new(corners, Provenance::Clean).unwrap();
        let index = KnnIndex::build(&pc);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let region =
                split_strategy(&pc, &index, SplitStrategy::Voxel { grid: 2 }, &mut rng).unwrap();
            assert_eq!(region.len(), 1, "each 2x2x2 cell holds exactly one corner");
        }
    }

    #[test]
    fn member_sets_are_stable_under_reordering() {
        // Same geometry, permuted storage order, center forced by position:
        // the member sets must agree up to the relabeling.
        let pc = unit_sphere_cloud(120, 15);
        let mut permuted: Vec<Point3> = pc.points().to_vec();
        permuted.rotate_left(17);
        let pc2 = PointCloud::new(permuted, Provenance::Clean).unwrap();
        let i1 = KnnIndex::build(&pc);
        let i2 = KnnIndex::build(&pc2);
        let probe = pc.point(3);
        let m1: Vec<Point3> =
            i1.knn(probe, 20).unwrap().iter().map(|&(i, _)| pc.point(i)).collect();
        let m2: Vec<Point3> =
            i2.knn(probe, 20).unwrap().iter().map(|&(i, _)| pc2.point(i)).collect();
        let key = |p: &Point3| (p[0].to_bits(), p[1].to_bits(), p[2].to_bits());
        let mut s1: Vec<_> = m1.iter().map(key).collect();
        let mut s2: Vec<_> = m2.iter().map(key).collect();
        s1.sort_unstable();
        s2.sort_unstable();
        assert_eq!(s1, s2);
    }
}
