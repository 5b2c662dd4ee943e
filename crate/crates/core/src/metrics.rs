//! Reconstruction quality metrics: Chamfer distances, normal consistency,
//! and F-score over surface point samples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::KnnIndex;
use crate::mesher::TriangleMesh;
use crate::vec3::{self, Point3};

/// Default F-score threshold: 1% of the normalized unit scale.
pub const DEFAULT_FSCORE_TAU: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChamferOrder {
    /// Euclidean distances (model units).
    L1,
    /// Squared Euclidean distances (model units squared).
    L2,
}

/// All four metrics with the sampling configuration that produced them.
/// Metric fields are `None` when the reconstruction was empty.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd_l1: Option<f64>,
    pub cd_l2: Option<f64>,
    pub normal_consistency: Option<f64>,
    pub f_score: Option<f64>,
    pub samples_a: usize,
    pub samples_b: usize,
    pub tau: f64,
    pub seed: u64,
    pub empty_reconstruction: bool,
}

impl MetricReport {
    pub fn empty(tau: f64, seed: u64) -> MetricReport {
        MetricReport {
            cd_l1: None,
            cd_l2: None,
            normal_consistency: None,
            f_score: None,
            samples_a: 0,
            samples_b: 0,
            tau,
            seed,
            empty_reconstruction: true,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

/// Surface samples with their source-face unit normals.
#[derive(Clone, Debug)]
pub struct SurfaceSamples {
    pub points: Vec<Point3>,
    pub normals: Vec<Point3>,
}

impl SurfaceSamples {
    pub fn new(points: Vec<Point3>, normals: Vec<Point3>) -> SurfaceSamples {
        assert_eq!(points.len(), normals.len());
        SurfaceSamples { points, normals }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draw `n` points area-uniformly over the mesh: triangles by cumulative
/// area, positions by uniform barycentric coordinates; each sample carries
/// its face normal.
pub fn sample_mesh<R: Rng>(mesh: &TriangleMesh, n: usize, rng: &mut R) -> Result<SurfaceSamples> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for i in 0..mesh.triangles.len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::ZeroAreaMesh);
    }

    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.gen_range(0.0..total);
        let tri = cumulative.partition_point(|&c| c <= u).min(mesh.triangles.len() - 1);
        let [ia, ib, ic] = mesh.triangles[tri];
        let (a, b, c) = (
            mesh.vertices[ia as usize],
            mesh.vertices[ib as usize],
            mesh.vertices[ic as usize],
        );
        // Square-root trick for uniform barycentric sampling.
        let r1: f64 = rng.gen::<f64>().sqrt();
        let r2: f64 = rng.gen();
        let w0 = 1.0 - r1;
        let w1 = r1 * (1.0 - r2);
        let w2 = r1 * r2;
        points.push([
            w0 * a[0] + w1 * b[0] + w2 * c[0],
            w0 * a[1] + w1 * b[1] + w2 * c[1],
            w0 * a[2] + w1 * b[2] + w2 * c[2],
        ]);
        normals.push(mesh.face_normals[tri]);
    }
    Ok(SurfaceSamples { points, normals })
}

/// Symmetric Chamfer distance: the two directed mean nearest-neighbor
/// distances averaged (their sum divided by two). L1 uses Euclidean, L2
/// squared Euclidean distances.
pub fn chamfer(a: &[Point3], b: &[Point3], order: ChamferOrder) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let index_a = KnnIndex::from_points(a);
    let index_b = KnnIndex::from_points(b);
    let directed = |from: &[Point3], to: &KnnIndex| -> Result<f64> {
        let mut acc = 0.0;
        for &p in from {
            let (_, d) = to.nearest(p)?;
            acc += match order {
                ChamferOrder::L1 => d,
                ChamferOrder::L2 => d * d,
            };
        }
        Ok(acc / from.len() as f64)
    };
    Ok(0.5 * (directed(a, &index_b)? + directed(b, &index_a)?))
}

/// Symmetric mean absolute cosine between normals of nearest-neighbor
/// matched samples, in [0, 1].
pub fn normal_consistency(a: &SurfaceSamples, b: &SurfaceSamples) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    for (index, n) in a.normals.iter().chain(b.normals.iter()).enumerate() {
        let norm = vec3::norm(*n);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::NonUnitNormal { index, norm });
        }
    }
    let index_a = KnnIndex::from_points(&a.points);
    let index_b = KnnIndex::from_points(&b.points);
    let directed = |from: &SurfaceSamples, to: &SurfaceSamples, to_index: &KnnIndex| -> Result<f64> {
        let mut acc = 0.0;
        for (p, n) in from.points.iter().zip(&from.normals) {
            let (j, _) = to_index.nearest(*p)?;
            acc += vec3::dot(*n, to.normals[j]).abs();
        }
        Ok(acc / from.len() as f64)
    };
    Ok(0.5 * (directed(a, b, &index_b)? + directed(b, a, &index_a)?))
}

/// Precision/recall of point matches within `tau`, combined as 2PR/(P+R)
/// (0 when both vanish).
pub fn f_score(a: &[Point3], b: &[Point3], tau: f64) -> Result<f64> {
    assert!(tau > 0.0, "threshold must be positive");
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let index_a = KnnIndex::from_points(a);
    let index_b = KnnIndex::from_points(b);
    let within = |from: &[Point3], to: &KnnIndex| -> Result<f64> {
        let mut hits = 0usize;
        for &p in from {
            if to.nearest(p)?.1 <= tau {
                hits += 1;
            }
        }
        Ok(hits as f64 / from.len() as f64)
    };
    let precision = within(a, &index_b)?;
    let recall = within(b, &index_a)?;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// All four metrics between two sampled surfaces.
pub fn evaluate_samples(
    a: &SurfaceSamples,
    b: &SurfaceSamples,
    tau: f64,
    seed: u64,
) -> Result<MetricReport> {
    Ok(MetricReport {
        cd_l1: Some(chamfer(&a.points, &b.points, ChamferOrder::L1)?),
        cd_l2: Some(chamfer(&a.points, &b.points, ChamferOrder::L2)?),
        normal_consistency: Some(normal_consistency(a, b)?),
        f_score: Some(f_score(&a.points, &b.points, tau)?),
        samples_a: a.len(),
        samples_b: b.len(),
        tau,
        seed,
        empty_reconstruction: false,
    })
}
