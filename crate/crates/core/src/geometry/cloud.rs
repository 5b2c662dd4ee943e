//! Point cloud container, unit-box normalization, and synthetic noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Point3};

/// Where a cloud's coordinates came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Clean,
    Noisy,
    Denoised,
}

/// Ordered list of 3D sample positions in model units.
#[derive(Clone, Debug)]
pub struct PointCloud {
    points: Vec<Point3>,
    provenance: Provenance,
}

/// Uniform scale + translation mapping model coordinates into the unit box.
///
/// `normalized = (p - center) * scale`. The inverse recovers the original
/// coordinates, so meshes extracted in normalized space can be written back
/// in the input's units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitTransform {
    pub center: Point3,
    pub scale: f64,
}

impl UnitTransform {
    pub fn identity() -> Self {
        UnitTransform { center: [0.0; 3], scale: 1.0 }
    }

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        vec3::scale(vec3::sub(p, self.center), self.scale)
    }

    #[inline]
    pub fn invert(&self, p: Point3) -> Point3 {
        vec3::add(vec3::scale(p, 1.0 / self.scale), self.center)
    }
}

impl PointCloud {
    /// Build a cloud, rejecting non-finite coordinates.
    pub fn new(points: Vec<Point3>, provenance: Provenance) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        for (index, p) in points.iter().enumerate() {
            if !vec3::is_finite(*p) {
                return Err(Error::NonFiniteCoordinate { index });
            }
        }
        Ok(PointCloud { points, provenance })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Longest bounding-box edge; the reference length for noise levels
    /// quoted as a fraction of `L`.
    pub fn longest_edge(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max)
    }

    /// Center at the bounding-box midpoint and scale uniformly so the longest
    /// bounding-box edge becomes 1; every coordinate then lies in
    /// [-0.5, 0.5]. Returns the transform whose inverse restores the
    /// original coordinates.
    pub fn normalize_to_unit(&self) -> Result<(PointCloud, UnitTransform)> {
        let (lo, hi) = self.bounds();
        let longest = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        if longest <= 0.0 {
            return Err(Error::DegenerateCloud);
        }
        let transform = UnitTransform {
            center: [
                0.5 * (lo[0] + hi[0]),
                0.5 * (lo[1] + hi[1]),
                0.5 * (lo[2] + hi[2]),
            ],
            scale: 1.0 / longest,
        };
        let points = self.points.iter().map(|&p| transform.apply(p)).collect();
        Ok((PointCloud { points, provenance: self.provenance }, transform))
    }

    /// Apply a transform previously returned by [`PointCloud::normalize_to_unit`].
    pub fn transformed(&self, transform: &UnitTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| transform.apply(p)).collect(),
            provenance: self.provenance,
        }
    }

    /// Isotropic Gaussian perturbation with per-axis standard deviation
    /// `sigma` (noise levels quoted as a "variance" of `x L` are interpreted
    /// as this per-axis standard deviation). The result is tagged noisy.
    pub fn add_noise<R: Rng>(&self, sigma: f64, rng: &mut R) -> PointCloud {
        assert!(sigma >= 0.0, "noise sigma must be non-negative");
        let points = self
            .points
            .iter()
            .map(|&p| {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                let dz: f64 = rng.sample(StandardNormal);
                [p[0] + sigma * dx, p[1] + sigma * dy, p[2] + sigma * dz]
            })
            .collect();
        PointCloud { points, provenance: Provenance::Noisy }
    }

    /// Same points with a different provenance tag.
    pub fn with_provenance(&self, provenance: Provenance) -> PointCloud {
        PointCloud { points: self.points.clone(), provenance }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(PointCloud::new(vec![], Provenance::Clean), Err(Error::EmptyCloud)));
        let err = PointCloud::new(vec![[0.0; 3], [f64::NAN, 0.0, 0.0]], Provenance::Clean);
        assert!(matches!(err, Err(Error::NonFiniteCoordinate { index: 1 })));
    }

    #[test]
    fn normalize_unit_cube_corners() {
        let corners: Vec<Point3> = (0..8)
            .map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
            .collect();
        let pc = PointCloud::new(corners, Provenance::Clean).unwrap();
        let (unit, t) = pc.normalize_to_unit().unwrap();
        assert!((t.scale - 1.0).abs() < 1e-15);
        for p in unit.points() {
            for a in 0..3 {
                assert!((p[a].abs() - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_two_points_on_axis() {
        let pc =
            PointCloud::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]], Provenance::Clean).unwrap();
        let (unit, t) = pc.normalize_to_unit().unwrap();
        assert_eq!(unit.points()[0], [-0.5, 0.0, 0.0]);
        assert_eq!(unit.points()[1], [0.5, 0.0, 0.0]);
        assert!((t.scale - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalize_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Point3> = (0..200)
            .map(|_| {
                [
                    rng.gen_range(-3.0..9.0),
                    rng.gen_range(100.0..104.0),
                    rng.gen_range(-0.5..0.5),
                ]
            })
            .collect();
        let pc = PointCloud::new(points.clone(), Provenance::Clean).unwrap();
        let (unit, t) = pc.normalize_to_unit().unwrap();
        for (orig, p) in points.iter().zip(unit.points()) {
            let back = t.invert(*p);
            for a in 0..3 {
                assert!((back[a] - orig[a]).abs() < 1e-12, "axis {a}: {} vs {}", back[a], orig[a]);
                assert!(p[a] >= -0.5 - 1e-12 && p[a] <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_cloud_is_rejected() {
        let pc = PointCloud::new(vec![[1.0, 2.0, 3.0]; 5], Provenance::Clean).unwrap();
        assert!(matches!(pc.normalize_to_unit(), Err(Error::DegenerateCloud)));
    }

    #[test]
    fn zero_noise_is_identity() {
        let pc =
            PointCloud::new(vec![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]], Provenance::Clean).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let noisy = pc.add_noise(0.0, &mut rng);
        assert_eq!(noisy.points(), pc.points());
        assert_eq!(noisy.provenance(), Provenance::Noisy);
    }

    #[test]
    fn noise_statistics_match_sigma() {
        let n = 100_000;
        let pc = PointCloud::new(vec![[0.0; 3]; n], Provenance::Clean).unwrap();
        let sigma = 0.02;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy = pc.add_noise(sigma, &mut rng);
        for a in 0..3 {
            let mean: f64 = noisy.points().iter().map(|p| p[a]).sum::<f64>() / n as f64;
            let var: f64 =
                noisy.points().iter().map(|p| (p[a] - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            assert!((std - sigma).abs() / sigma < 0.03, "axis {a} std {std}");
            // CLT bound on the empirical mean displacement.
            assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt(), "axis {a} mean {mean}");
        }
    }
}
