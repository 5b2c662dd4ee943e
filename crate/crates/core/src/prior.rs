//! Data-driven prior: train the shared decoder and one embedding per shape
//! against ground-truth signed distances of analytic shapes.
//!
//! Desk-scale supervision comes from closed-form signed distance functions
//! rather than mesh distance queries; every loss term is unchanged, only the
//! source of ground truth is analytic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, NodeId, Tape};
use crate::error::{Error, Result};
use crate::sdf::{LatentCode, NetConfig, SdfNetwork, StagedNet};
use crate::vec3::{self, Point3};

/// Standard deviation of the Gaussian offset for near-surface supervision
/// queries.
pub const NEAR_SURFACE_SIGMA: f64 = 0.05;

/// Shapes with closed-form signed distances, exact for primitives and a
/// tight lower bound (min of children) for unions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticShape {
    Sphere { center: Point3, radius: f64 },
    Box { center: Point3, half_extents: Point3 },
    /// Ring in the plane z = center_z with ring radius `major` and tube
    /// radius `minor`.
    Torus { center: Point3, major: f64, minor: f64 },
    Capsule { a: Point3, b: Point3, radius: f64 },
    UnionOfTwo { first: std::boxed::Box<AnalyticShape>, second: std::boxed::Box<AnalyticShape> },
}

impl AnalyticShape {
    /// Signed distance, negative inside.
    pub fn sdf(&self, p: Point3) -> f64 {
        match self {
            AnalyticShape::Sphere { center, radius } => vec3::dist(p, *center) - radius,
            AnalyticShape::Box { center, half_extents } => {
                let q = [
                    (p[0] - center[0]).abs() - half_extents[0],
                    (p[1] - center[1]).abs() - half_extents[1],
                    (p[2] - center[2]).abs() - half_extents[2],
                ];
                let outside = [q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)];
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                vec3::norm(outside) + inside
            }
            AnalyticShape::Torus { center, major, minor } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let ring = (dx * dx + dy * dy).sqrt() - major;
                let dz = p[2] - center[2];
                (ring * ring + dz * dz).sqrt() - minor
            }
            AnalyticShape::Capsule { a, b, radius } => {
                let pa = vec3::sub(p, *a);
                let ba = vec3::sub(*b, *a);
                let t = (vec3::dot(pa, ba) / vec3::dot(ba, ba)).clamp(0.0, 1.0);
                vec3::norm(vec3::sub(pa, vec3::scale(ba, t))) - radius
            }
            AnalyticShape::UnionOfTwo { first, second } => first.sdf(p).min(second.sdf(p)),
        }
    }

    /// Outward unit normal from the signed-distance gradient (central
    /// differences; oracle-grade, not on any training path).
    pub fn normal(&self, p: Point3) -> Point3 {
        let h = 1e-6;
        let mut g = [0.0; 3];
        for a in 0..3 {
            let mut up = p;
            up[a] += h;
            let mut down = p;
            down[a] -= h;
            g[a] = (self.sdf(up) - self.sdf(down)) / (2.0 * h);
        }
        vec3::normalized(g, 1e-12).unwrap_or([0.0, 0.0, 1.0])
    }

    /// A point on the surface, approximately area-uniform per primitive.
    pub fn sample_surface<R: Rng>(&self, rng: &mut R) -> Point3 {
        match self {
            AnalyticShape::Sphere { center, radius } => {
                let d = random_direction(rng);
                vec3::add(*center, vec3::scale(d, *radius))
            }
            AnalyticShape::Box { center, half_extents } => {
                let h = *half_extents;
                let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
                let total: f64 = 2.0 * (areas[0] + areas[1] + areas[2]);
                let mut pick = rng.gen_range(0.0..total);
                let mut axis = 0;
                for (a, &area) in areas.iter().enumerate() {
                    if pick < 2.0 * area {
                        axis = a;
                        break;
                    }
                    pick -= 2.0 * area;
                }
                let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let mut p = [0.0; 3];
                for a in 0..3 {
                    p[a] = if a == axis {
                        side * h[a]
                    } else {
                        rng.gen_range(-h[a]..=h[a])
                    };
                }
                vec3::add(*center, p)
            }
            AnalyticShape::Torus { center, major, minor } => {
                // Rejection on the tube angle keeps the sampling area-uniform.
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let phi = loop {
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let w = (major + minor * phi.cos()) / (major + minor);
                    if rng.gen::<f64>() < w {
                        break phi;
                    }
                };
                let ring = major + minor * phi.cos();
                vec3::add(
                    *center,
                    [ring * theta.cos(), ring * theta.sin(), minor * phi.sin()],
                )
            }
            AnalyticShape::Capsule { a, b, radius } => {
                let ba = vec3::sub(*b, *a);
                let len = vec3::norm(ba);
                let lateral = std::f64::consts::TAU * radius * len;
                let caps = 4.0 * std::f64::consts::PI * radius * radius;
                if rng.gen_range(0.0..lateral + caps) < lateral {
                    let axis = vec3::scale(ba, 1.0 / len);
                    let (u, v) = orthonormal_frame(axis);
                    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                    let t = rng.gen_range(0.0..1.0);
                    let radial = vec3::add(
                        vec3::scale(u, radius * theta.cos()),
                        vec3::scale(v, radius * theta.sin()),
                    );
                    vec3::add(vec3::add(*a, vec3::scale(ba, t)), radial)
                } else {
                    let d = random_direction(rng);
                    let along = vec3::dot(d, vec3::scale(ba, 1.0 / len));
                    let end = if along >= 0.0 { *b } else { *a };
                    vec3::add(end, vec3::scale(d, *radius))
                }
            }
            AnalyticShape::UnionOfTwo { first, second } => {
                // Draw from one child and reject samples swallowed by the
                // other; bounded retries guard against heavy overlap.
                for _ in 0..64 {
                    let child: &AnalyticShape =
                        if rng.gen::<bool>() { first } else { second };
                    let other: &AnalyticShape =
                        if std::ptr::eq(child, &**first) { second } else { first };
                    let p = child.sample_surface(rng);
                    if other.sdf(p) > -1e-12 {
                        return p;
                    }
                }
                first.sample_surface(rng)
            }
        }
    }
}

fn random_direction<R: Rng>(rng: &mut R) -> Point3 {
    loop {
        let v = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        if let Some(d) = vec3::normalized(v, 1e-9) {
            return d;
        }
    }
}

fn orthonormal_frame(axis: Point3) -> (Point3, Point3) {
    let pick = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = vec3::normalized(vec3::cross(axis, pick), 1e-12).expect("axis is unit length");
    let v = vec3::cross(axis, u);
    (u, v)
}

/// Queries and exact signed-distance targets for one shape.
#[derive(Clone, Debug)]
pub struct SupervisionBatch {
    pub shape_id: usize,
    pub queries: Vec<Point3>,
    pub targets: Vec<f64>,
}

impl SupervisionBatch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Draw `n` supervision queries: half near the surface (surface sample plus
/// an isotropic Gaussian of std [`NEAR_SURFACE_SIGMA`]), half uniform in the
/// unit box. Targets come from the closed-form signed distance.
pub fn generate_supervision<R: Rng>(
    shape: &AnalyticShape,
    shape_id: usize,
    n: usize,
    rng: &mut R,
) -> SupervisionBatch {
    assert!(n >= 1, "need at least one query");
    let mut queries = Vec::with_capacity(n);
    for i in 0..n {
        let q = if i % 2 == 0 {
            let s = shape.sample_surface(rng);
            [
                s[0] + NEAR_SURFACE_SIGMA * rng.sample::<f64, _>(StandardNormal),
                s[1] + NEAR_SURFACE_SIGMA * rng.sample::<f64, _>(StandardNormal),
                s[2] + NEAR_SURFACE_SIGMA * rng.sample::<f64, _>(StandardNormal),
            ]
        } else {
            [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ]
        };
        queries.push(q);
    }
    let targets = queries.iter().map(|&q| shape.sdf(q)).collect();
    SupervisionBatch { shape_id, queries, targets }
}

/// Squared prediction error over the batch plus the embedding regularizer
/// `alpha * |c|²` for the batch's shape, as a tape node.
pub fn prior_loss(
    tape: &mut Tape,
    net: &SdfNetwork,
    staged: &StagedNet,
    batch: &SupervisionBatch,
    alpha: f64,
) -> Result<NodeId> {
    if batch.shape_id >= staged.code_count() {
        return Err(Error::InvalidInput {
            what: "supervision batch",
            detail: format!(
                "shape id {} has no staged code ({} available)",
                batch.shape_id,
                staged.code_count()
            ),
        });
    }
    let mut terms: Vec<NodeId> = Vec::with_capacity(batch.len() + 1);
    for (&q, &target) in batch.queries.iter().zip(&batch.targets) {
        let (_, s) = staged.forward_shape_at(net, tape, batch.shape_id, q);
        let t = tape.constant(target);
        let d = tape.sub(s, t);
        terms.push(tape.mul(d, d));
    }
    terms.push(staged.code_penalty(tape, batch.shape_id, alpha));
    Ok(tape.sum(&terms))
}

/// Everything the prior stage learns.
#[derive(Clone, Debug)]
pub struct TrainedPrior {
    pub net: SdfNetwork,
    pub codes: Vec<LatentCode>,
    pub loss_trace: Vec<f64>,
}

/// Prior-training schedule and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Embedding-regularizer weight.
    pub alpha: f64,
    pub epochs: usize,
    /// Decoder learning rate.
    pub net_lr: f64,
    /// Embedding learning rate.
    pub embed_lr: f64,
    /// Both learning rates halve every this many epochs.
    pub lr_halve_every: usize,
    /// Supervision pool drawn once per shape.
    pub queries_per_shape: usize,
    /// Queries per shape per epoch.
    pub batch_per_shape: usize,
    pub code_init_std: f64,
    pub net: NetConfig,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            alpha: 1e-4,
            epochs: 2000,
            net_lr: 1e-3,
            embed_lr: 5e-4,
            lr_halve_every: 500,
            queries_per_shape: 4096,
            batch_per_shape: 128,
            code_init_std: 0.01,
            net: NetConfig::default(),
            seed: 0,
        }
    }
}

/// Train decoder and embeddings jointly: one Adam step per epoch on the sum
/// of per-shape batch losses, parameters and codes on their own learning
/// rates, both halving on the configured schedule.
pub fn train_prior(shapes: &[AnalyticShape], config: &PriorConfig) -> Result<TrainedPrior> {
    train_prior_from(shapes, config, None)
}

/// Same as [`train_prior`] but optionally resuming from an existing decoder
/// and embedding table.
pub fn train_prior_from(
    shapes: &[AnalyticShape],
    config: &PriorConfig,
    init: Option<(SdfNetwork, Vec<LatentCode>)>,
) -> Result<TrainedPrior> {
    assert!(!shapes.is_empty(), "need at least one training shape");
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (mut net, mut codes) = match init {
        Some((net, codes)) => {
            if codes.len() != shapes.len() {
                return Err(Error::InvalidInput {
                    what: "resume checkpoint",
                    detail: format!("{} codes for {} shapes", codes.len(), shapes.len()),
                });
            }
            // Consume the same rng draws as a fresh start so resumed runs
            // stay on the seeded stream for batching.
            let _ = SdfNetwork::init(&config.net, &mut rng);
            for _ in shapes {
                let _ = LatentCode::random(config.net.code_len, config.code_init_std, &mut rng);
            }
            (net, codes)
        }
        None => {
            let net = SdfNetwork::init(&config.net, &mut rng);
            let codes = shapes
                .iter()
                .map(|_| LatentCode::random(config.net.code_len, config.code_init_std, &mut rng))
                .collect();
            (net, codes)
        }
    };

    let pools: Vec<SupervisionBatch> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| generate_supervision(s, i, config.queries_per_shape, &mut rng))
        .collect();

    let code_len = config.net.code_len;
    let mut opt_net = AdamState::new(net.param_count());
    let mut opt_codes = AdamState::new(shapes.len() * code_len);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut tape = Tape::new();
    let mut flat_codes = vec![0.0f64; shapes.len() * code_len];
    let batch = config.batch_per_shape.min(config.queries_per_shape);

    for epoch in 0..config.epochs {
        let lr_scale = 0.5f64.powi((epoch / config.lr_halve_every) as i32);
        tape.reset();
        let staged = net.stage_many(&mut tape, &codes)?;

        let mut shape_losses: Vec<NodeId> = Vec::with_capacity(shapes.len());
        for pool in &pools {
            let idx = crate::geometry::sample_without_replacement(pool.len(), batch, &mut rng);
            let minibatch = SupervisionBatch {
                shape_id: pool.shape_id,
                queries: idx.iter().map(|&i| pool.queries[i]).collect(),
                targets: idx.iter().map(|&i| pool.targets[i]).collect(),
            };
            shape_losses.push(prior_loss(&mut tape, &net, &staged, &minibatch, config.alpha)?);
        }
        let total = if shape_losses.len() == 1 {
            shape_losses[0]
        } else {
            tape.sum(&shape_losses)
        };
        let loss = tape.value(total);
        if !loss.is_finite() {
            let culprit = shape_losses.iter().position(|&n| !tape.value(n).is_finite());
            return Err(Error::NonFiniteLoss {
                context: format!("prior epoch {epoch}, shape {culprit:?}"),
            });
        }
        loss_trace.push(loss);

        let grads = tape.backward(total)?;
        opt_net.step(net.params_mut(), staged.param_gradients(&grads), config.net_lr * lr_scale)?;
        for (i, c) in codes.iter().enumerate() {
            flat_codes[i * code_len..(i + 1) * code_len].copy_from_slice(&c.0);
        }
        opt_codes.step(&mut flat_codes, staged.code_gradients(&grads), config.embed_lr * lr_scale)?;
        for (i, c) in codes.iter_mut().enumerate() {
            c.0.copy_from_slice(&flat_codes[i * code_len..(i + 1) * code_len]);
        }
    }

    Ok(TrainedPrior { net, codes, loss_trace })
}

/// Mean absolute field error against the analytic signed distance over
/// freshly drawn evaluation queries. Shared by tests and ablation reports.
pub fn mean_abs_sdf_error<R: Rng>(
    net: &SdfNetwork,
    code: &LatentCode,
    shape: &AnalyticShape,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let batch = generate_supervision(shape, 0, n, rng);
    let mut total = 0.0;
    for (&q, &t) in batch.queries.iter().zip(&batch.targets) {
        total += (net.evaluate(code, q)? - t).abs();
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn desk_sphere() -> AnalyticShape {
        AnalyticShape::Sphere { center: [0.0; 3], radius: 0.35 }
    }

    #[test]
    fn sphere_sdf_values() {
        let unit = AnalyticShape::Sphere { center: [0.0; 3], radius: 1.0 };
        assert_eq!(unit.sdf([0.0; 3]), -1.0);
        assert_eq!(unit.sdf([1.0, 0.0, 0.0]), 0.0);
        assert_eq!(unit.sdf([2.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn box_sdf_axis_face() {
        let b = AnalyticShape::Box { center: [0.0; 3], half_extents: [0.3, 0.3, 0.3] };
        assert!((b.sdf([0.5, 0.0, 0.0]) - 0.2).abs() < 1e-15);
        assert!((b.sdf([0.0, 0.0, 0.0]) + 0.3).abs() < 1e-15);
        // Corner region: Euclidean distance to the corner.
        let d = b.sdf([0.4, 0.4, 0.4]);
        assert!((d - (3.0f64).sqrt() * 0.1).abs() < 1e-12);
    }

    #[test]
    fn torus_and_capsule_surface_points_have_zero_sdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng as _;
        let shapes = [
            AnalyticShape::Torus { center: [0.1, 0.0, -0.1], major: 0.25, minor: 0.08 },
            AnalyticShape::Capsule { a: [-0.2, 0.0, 0.0], b: [0.2, 0.1, 0.0], radius: 0.1 },
            desk_sphere(),
            AnalyticShape::Box { center: [0.0; 3], half_extents: [0.2, 0.25, 0.3] },
        ];
        for shape in &shapes {
            for _ in 0..200 {
                let p = shape.sample_surface(&mut rng);
                assert!(
                    shape.sdf(p).abs() < 1e-9,
                    "{shape:?}: surface sample off-surface by {}",
                    shape.sdf(p)
                );
            }
        }
    }

    #[test]
    fn union_sdf_is_min_and_samples_lie_on_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        use rand::SeedableRng as _;
        let union = AnalyticShape::UnionOfTwo {
            first: Box::new(AnalyticShape::Sphere { center: [-0.15, 0.0, 0.0], radius: 0.2 }),
            second: Box::new(AnalyticShape::Sphere { center: [0.15, 0.0, 0.0], radius: 0.2 }),
        };
        assert_eq!(union.sdf([-0.15, 0.0, 0.0]), -0.2);
        for _ in 0..200 {
            let p = union.sample_surface(&mut rng);
            assert!(union.sdf(p).abs() < 1e-9);
        }
    }

    #[test]
    fn normals_point_outward() {
        let s = desk_sphere();
        let n = s.normal([0.35, 0.0, 0.0]);
        assert!((n[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn supervision_targets_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = desk_sphere();
        let batch = generate_supervision(&shape, 0, 512, &mut rng);
        assert_eq!(batch.len(), 512);
        for (&q, &t) in batch.queries.iter().zip(&batch.targets) {
            assert_eq!(t, shape.sdf(q));
        }
    }

    #[test]
    fn prior_loss_matches_hand_computation() {
        // A hand-built net computing f(q) = q_x exactly lets the loss be
        // checked against an arithmetic oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let config = NetConfig {
            code_len: 2,
            hidden_width: 2,
            depth: 2,
            activation: crate::sdf::Activation::Relu,
            skip_at: None,
        };
        let mut net = SdfNetwork::init(&config, &mut rng);
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        // h0 = relu(x), h1 = relu(-x), f = h0 - h1.
        let fan_in = 5;
        net.params_mut()[0] = 1.0;
        net.params_mut()[fan_in] = -1.0;
        let l1 = 2 * fan_in + 2;
        net.params_mut()[l1] = 1.0;
        net.params_mut()[l1 + 1] = -1.0;

        let code = LatentCode(vec![0.6, -0.8]); // |c|^2 = 1
        let alpha = 0.5;
        let batch = SupervisionBatch {
            shape_id: 0,
            queries: vec![[0.3, 0.0, 0.0], [-0.2, 0.5, 0.1], [0.9, -0.4, 0.2]],
            targets: vec![0.3, -0.2, 0.9],
        };

        let mut tape = Tape::new();
        let staged = net.stage_many(&mut tape, std::slice::from_ref(&code)).unwrap();
        let loss = prior_loss(&mut tape, &net, &staged, &batch, alpha).unwrap();
        // Perfect predictions: only the regularizer remains.
        assert!((tape.value(loss) - 0.5).abs() < 1e-12);

        // Random targets: hand-summed squared errors plus alpha |c|^2.
        let batch2 = SupervisionBatch {
            shape_id: 0,
            queries: batch.queries.clone(),
            targets: vec![0.1, 0.4, -0.3],
        };
        let mut tape2 = Tape::new();
        let staged2 = net.stage_many(&mut tape2, std::slice::from_ref(&code)).unwrap();
        let loss2 = prior_loss(&mut tape2, &net, &staged2, &batch2, alpha).unwrap();
        let want: f64 = [(0.3f64 - 0.1), (-0.2 - 0.4), (0.9 + 0.3)]
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            + 0.5;
        assert!((tape2.value(loss2) - want).abs() < 1e-12);

        // Zero code and perfect predictions: loss 0.
        let zero = LatentCode::zeros(2);
        let mut tape3 = Tape::new();
        let staged3 = net.stage_many(&mut tape3, std::slice::from_ref(&zero)).unwrap();
        let loss3 = prior_loss(&mut tape3, &net, &staged3, &batch, alpha).unwrap();
        assert_eq!(tape3.value(loss3), 0.0);
    }

    #[test]
    fn missing_code_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = NetConfig { code_len: 2, hidden_width: 4, depth: 2, ..NetConfig::default() };
        let net = SdfNetwork::init(&config, &mut rng);
        let code = LatentCode::zeros(2);
        let mut tape = Tape::new();
        let staged = net.stage_many(&mut tape, std::slice::from_ref(&code)).unwrap();
        let batch = SupervisionBatch { shape_id: 3, queries: vec![[0.0; 3]], targets: vec![0.0] };
        assert!(prior_loss(&mut tape, &net, &staged, &batch, 0.1).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let config = PriorConfig {
            epochs: 0,
            queries_per_shape: 64,
            batch_per_shape: 16,
            net: NetConfig { code_len: 4, hidden_width: 8, depth: 3, ..NetConfig::default() },
            seed: 11,
            ..PriorConfig::default()
        };
        let trained = train_prior(&[desk_sphere()], &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fresh = SdfNetwork::init(&config.net, &mut rng);
        assert_eq!(trained.net.params(), fresh.params());
        assert!(trained.loss_trace.is_empty());
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let config = PriorConfig {
            epochs: 12,
            queries_per_shape: 128,
            batch_per_shape: 32,
            net: NetConfig { code_len: 4, hidden_width: 8, depth: 3, ..NetConfig::default() },
            seed: 21,
            ..PriorConfig::default()
        };
        let shapes = [desk_sphere(), AnalyticShape::Box {
            center: [0.0; 3],
            half_extents: [0.25, 0.2, 0.3],
        }];
        let a = train_prior(&shapes, &config).unwrap();
        let b = train_prior(&shapes, &config).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.net.params()), bits(b.net.params()));
        for (ca, cb) in a.codes.iter().zip(&b.codes) {
            assert_eq!(bits(&ca.0), bits(&cb.0));
        }
        assert_eq!(bits(&a.loss_trace), bits(&b.loss_trace));
    }

    #[test]
    fn short_training_run_reduces_loss() {
        let config = PriorConfig {
            epochs: 200,
            queries_per_shape: 1024,
            batch_per_shape: 128,
            net: NetConfig { code_len: 16, hidden_width: 32, depth: 4, ..NetConfig::default() },
            seed: 31,
            ..PriorConfig::default()
        };
        let trained = train_prior(&[desk_sphere()], &config).unwrap();
        let early = crate::testkit::median(&trained.loss_trace[..20]);
        let late = crate::testkit::median(&trained.loss_trace[180..]);
        assert!(late < 0.5 * early, "early {early} late {late}");
    }
}
