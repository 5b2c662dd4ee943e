//! Acceptance suite: every release gate in one place.
//!
//! Each check prints one `acceptance NN <name>: PASS/FAIL` line (visible
//! with `--nocapture`) and asserts its pinned tolerance. Heavy end-to-end
//! checks serialize on a mutex so their wall-clock budgets reflect
//! single-threaded execution; the pretrained decoder is shared and its
//! training time is charged to the first pipeline check that needs it.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdfit_core::autodiff::Tape;
use sdfit_core::finetune::{
    finetune, finetune_from, noisy_sphere_cloud, random_init_like, FinetuneConfig, MappingScope,
    RegionStrategy,
};
use sdfit_core::geometry::{PointCloud, Provenance};
use sdfit_core::mesher::{extract_isosurface, extract_zero_level, Bounds, TriangleMesh};
use sdfit_core::metrics::{
    chamfer, evaluate_samples, f_score, normal_consistency, sample_mesh, ChamferOrder,
    SurfaceSamples,
};
use sdfit_core::prior::{train_prior, AnalyticShape, PriorConfig, TrainedPrior};
use sdfit_core::sdf::{
    init_code_from_prior, save_checkpoint, LatentCode, NetConfig, SdfNetwork,
};
use sdfit_core::testkit;
use sdfit_core::vec3::{self, Point3};

// ── Pinned tolerances and budgets ───────────────────────────────────────

const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const SECOND_ORDER_REL_TOL: f64 = 1e-3;
const SECOND_ORDER_BUDGET: Duration = Duration::from_secs(60);
const EMD_ABS_TOL: f64 = 1e-12;
const EMD_BUDGET: Duration = Duration::from_secs(30);
const PULL_COSINE_TOL: f64 = 1e-10;
const PULL_MAGNITUDE_REL_TOL: f64 = 1e-12;
const PULL_BUDGET: Duration = Duration::from_secs(10);
const PIPELINE_CD_L2_MAX: f64 = 5e-4;
const PIPELINE_BUDGET: Duration = Duration::from_secs(600);
const DIRECTION_BUDGET: Duration = Duration::from_secs(1200);
const MC_BUDGET: Duration = Duration::from_secs(10);
const METRIC_BUDGET: Duration = Duration::from_secs(10);
const METRIC_RIGID_TOL: f64 = 1e-9;
const METRIC_BRUTE_TOL: f64 = 1e-12;

fn report(number: u8, name: &str, pass: bool, details: &str) {
    println!(
        "acceptance {number:02} {name}: {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number:02} {name}: {details}");
}

/// Heavy pipeline checks run one at a time so wall-clock budgets are
/// honest single-threaded numbers.
fn heavy_lock() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

// ── Shared fixtures ─────────────────────────────────────────────────────

fn desk_shapes() -> Vec<AnalyticShape> {
    vec![
        AnalyticShape::Sphere { center: [0.0; 3], radius: 0.35 },
        AnalyticShape::Box { center: [0.0; 3], half_extents: [0.3, 0.25, 0.2] },
        AnalyticShape::Torus { center: [0.0; 3], major: 0.3, minor: 0.1 },
    ]
}

fn desk_prior_config() -> PriorConfig {
    PriorConfig {
        epochs: 500,
        queries_per_shape: 4096,
        batch_per_shape: 128,
        net: NetConfig { code_len: 64, hidden_width: 64, depth: 8, ..NetConfig::default() },
        seed: 7,
        ..PriorConfig::default()
    }
}

/// The shared pretrained decoder plus the wall time its training took.
fn desk_prior() -> &'static (TrainedPrior, Duration) {
    static PRIOR: OnceLock<(TrainedPrior, Duration)> = OnceLock::new();
    PRIOR.get_or_init(|| {
        let start = Instant::now();
        let prior =
            train_prior(&desk_shapes(), &desk_prior_config()).expect("prior training converges");
        (prior, start.elapsed())
    })
}

fn sphere_gt_samples(n: usize, seed: u64) -> Vec<Point3> {
    let sphere = AnalyticShape::Sphere { center: [0.0; 3], radius: 0.35 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sphere.sample_surface(&mut rng)).collect()
}

fn mesh_cd_l2(net: &SdfNetwork, code: &LatentCode, gt: &[Point3], resolution: usize) -> Option<f64> {
    let mesh = extract_zero_level(net, code, resolution, Bounds::default_unit()).ok()?;
    if mesh.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    let samples = sample_mesh(&mesh, gt.len(), &mut rng).ok()?;
    chamfer(&samples.points, gt, ChamferOrder::L2).ok()
}

fn random_net(seed: u64, code_len: usize, hidden: usize, depth: usize) -> (SdfNetwork, LatentCode) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = NetConfig { code_len, hidden_width: hidden, depth, ..NetConfig::default() };
    let net = SdfNetwork::init(&config, &mut rng);
    let code = LatentCode::random(code_len, 0.3, &mut rng);
    (net, code)
}

// ── 01: first-order gradients vs finite differences ────────────────────

#[test]
fn c01_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        // At most ~1k parameters per net.
        let (net, code) = random_net(seed, 4, 16, 3);
        assert!(net.param_count() <= 1000);
        let q = [0.11, -0.23, 0.05];

        let mut tape = Tape::new();
        let staged = net.stage(&mut tape, &code).unwrap();
        let (_, s) = staged.forward_at(&net, &mut tape, q);
        let grads = tape.backward(s).unwrap();
        let analytic = staged.param_gradients(&grads);

        let mut f = |params: &[f64]| {
            let mut probe = net.clone();
            probe.params_mut().copy_from_slice(params);
            probe.evaluate(&code, q).unwrap()
        };
        let fd = testkit::finite_diff_gradient(&mut f, net.params(), testkit::FD_STEP);
        worst = worst.max(testkit::max_relative_error(analytic, &fd));
    }
    let elapsed = start.elapsed();
    report(
        1,
        "gradient-correctness",
        worst < GRAD_REL_TOL && elapsed < GRAD_BUDGET,
        &format!("max rel err {worst:.3e} (tol {GRAD_REL_TOL:.0e}), {elapsed:?} (budget {GRAD_BUDGET:?})"),
    );
}

// ── 02: parameter gradients through the spatial gradient ───────────────

#[test]
fn c02_second_order_correctness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 100..110u64 {
        let (net, code) = random_net(seed, 4, 12, 3);
        let q = [0.2, 0.07, -0.13];

        let mut tape = Tape::new();
        let staged = net.stage(&mut tape, &code).unwrap();
        let (qn, s) = staged.forward_at(&net, &mut tape, q);
        let g = staged.spatial_gradient_nodes(&mut tape, qn, s).unwrap();
        let sq: Vec<_> = g.iter().map(|&n| tape.mul(n, n)).collect();
        let loss = tape.sum(&sq);
        let grads = tape.backward(loss).unwrap();
        let analytic = staged.param_gradients(&grads).to_vec();

        let mut f = |params: &[f64]| {
            let mut probe = net.clone();
            probe.params_mut().copy_from_slice(params);
            let grad = probe.spatial_gradient(&code, q).unwrap();
            vec3::norm_sq(grad)
        };
        let fd = testkit::finite_diff_gradient(&mut f, net.params(), testkit::FD_STEP);
        worst = worst.max(testkit::max_relative_error(&analytic, &fd));
    }
    let elapsed = start.elapsed();
    report(
        2,
        "second-order-correctness",
        worst < SECOND_ORDER_REL_TOL && elapsed < SECOND_ORDER_BUDGET,
        &format!(
            "max rel err {worst:.3e} (tol {SECOND_ORDER_REL_TOL:.0e}), {elapsed:?} (budget {SECOND_ORDER_BUDGET:?})"
        ),
    );
}

// ── 03: exact transport vs factorial brute force ────────────────────────

#[test]
fn c03_emd_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=6);
        let a: Vec<Point3> = (0..n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let b: Vec<Point3> = (0..n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let solver = sdfit_core::transport::exact_emd(&a, &b).unwrap().total_cost;
        let oracle = testkit::brute_force_emd(&a, &b).unwrap();
        worst = worst.max((solver - oracle).abs());
    }
    let elapsed = start.elapsed();
    report(
        3,
        "emd-exactness",
        worst < EMD_ABS_TOL && elapsed < EMD_BUDGET,
        &format!("max |solver - brute force| {worst:.3e} (tol {EMD_ABS_TOL:.0e}), {elapsed:?}"),
    );
}

// ── 04: pulling displacement parallel to the gradient ──────────────────

#[test]
fn c04_pulling_invariant() {
    let (prior, _) = desk_prior();
    let start = Instant::now();
    let code = init_code_from_prior(&prior.codes).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_cos = 0.0f64;
    let mut worst_mag = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let q = [
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ];
        let s = prior.net.evaluate(&code, q).unwrap();
        let g = prior.net.spatial_gradient(&code, q).unwrap();
        if vec3::norm(g) < 1e-6 || s.abs() < 1e-12 {
            continue;
        }
        let pulled = prior.net.pull_to_surface(&code, q).unwrap();
        let disp = vec3::sub(q, pulled);
        let mag_err = (vec3::norm(disp) - s.abs()).abs() / s.abs();
        let cos = vec3::dot(disp, g) / (vec3::norm(disp) * vec3::norm(g));
        worst_cos = worst_cos.max((cos.abs() - 1.0).abs());
        worst_mag = worst_mag.max(mag_err);
        checked += 1;
    }
    let elapsed = start.elapsed();
    report(
        4,
        "pulling-invariant",
        worst_cos < PULL_COSINE_TOL && worst_mag < PULL_MAGNITUDE_REL_TOL && elapsed < PULL_BUDGET,
        &format!(
            "cosine dev {worst_cos:.2e} (tol {PULL_COSINE_TOL:.0e}), magnitude rel dev {worst_mag:.2e} (tol {PULL_MAGNITUDE_REL_TOL:.0e}), {elapsed:?}"
        ),
    );
}

// ── 05: full desk pipeline on a noisy sphere ────────────────────────────

#[test]
fn c05_desk_pipeline_sphere() {
    let _guard = heavy_lock();
    let (prior, prior_time) = desk_prior();
    let start = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let cloud = noisy_sphere_cloud(2000, 0.35, 0.01, &mut rng);
    let cfg = FinetuneConfig {
        iterations: 1500,
        region_size: 300,
        query_count: 300,
        seed: 506,
        ..FinetuneConfig::default()
    };
    let result = finetune(prior, &cloud, &cfg).unwrap();

    let mesh =
        extract_zero_level(&result.net, &result.code, 64, Bounds::default_unit()).unwrap();
    assert!(!mesh.is_empty(), "reconstruction must produce a surface");
    let mut srng = ChaCha8Rng::seed_from_u64(507);
    let samples = sample_mesh(&mesh, 10_000, &mut srng).unwrap();
    let gt = sphere_gt_samples(10_000, 508);
    let cd2 = chamfer(&samples.points, &gt, ChamferOrder::L2).unwrap();

    // The finetuned field should also be small on held-out clean surface
    // points.
    let clean = sphere_gt_samples(500, 509);
    let mean_abs_f = clean
        .iter()
        .map(|&p| result.net.evaluate(&result.code, p).unwrap().abs())
        .sum::<f64>()
        / clean.len() as f64;

    // Loss trace direction: late median strictly below early median.
    let n = result.loss_trace.len();
    let early = testkit::median(&result.loss_trace[..n / 10]);
    let late = testkit::median(&result.loss_trace[n - n / 10..]);

    let elapsed = start.elapsed() + *prior_time;
    report(
        5,
        "desk-pipeline-sphere",
        cd2 < PIPELINE_CD_L2_MAX
            && mean_abs_f < 0.015
            && late < early
            && elapsed < PIPELINE_BUDGET,
        &format!(
            "CD_L2 {cd2:.3e} (tol {PIPELINE_CD_L2_MAX:.0e}), mean|f| on clean surface {mean_abs_f:.4} (tol 0.015), loss {early:.5}->{late:.5}, {elapsed:?} incl. prior {prior_time:?} (budget {PIPELINE_BUDGET:?})"
        ),
    );
}

// ── 06: noise level direction ───────────────────────────────────────────

#[test]
fn c06_noise_level_direction() {
    let _guard = heavy_lock();
    let (prior, _) = desk_prior();
    let start = Instant::now();

    // L is the longest bounding-box edge of the clean sphere cloud (0.7).
    let l = 0.7;
    let mut rng_mid = ChaCha8Rng::seed_from_u64(606);
    let cloud_mid = noisy_sphere_cloud(2000, 0.35, 0.01 * l, &mut rng_mid);
    let mut rng_max = ChaCha8Rng::seed_from_u64(606);
    let cloud_max = noisy_sphere_cloud(2000, 0.35, 0.05 * l, &mut rng_max);

    let cfg = FinetuneConfig {
        iterations: 700,
        region_size: 250,
        query_count: 250,
        seed: 607,
        ..FinetuneConfig::default()
    };
    let fit_mid = finetune(prior, &cloud_mid, &cfg).unwrap();
    let fit_max = finetune(prior, &cloud_max, &cfg).unwrap();

    let gt = sphere_gt_samples(6000, 608);
    let cd_mid = mesh_cd_l2(&fit_mid.net, &fit_mid.code, &gt, 48);
    let cd_max = mesh_cd_l2(&fit_max.net, &fit_max.code, &gt, 48);

    // Watertightness of the high-noise reconstruction.
    let mesh_max =
        extract_zero_level(&fit_max.net, &fit_max.code, 48, Bounds::default_unit()).unwrap();
    let open_edges =
        mesh_max.edge_incidence().values().filter(|&&count| count != 2).count();

    let elapsed = start.elapsed();
    let pass = match (cd_mid, cd_max) {
        (Some(mid), Some(max)) => {
            max >= mid && !mesh_max.is_empty() && open_edges == 0 && elapsed < DIRECTION_BUDGET
        }
        _ => false,
    };
    report(
        6,
        "noise-level-direction",
        pass,
        &format!(
            "CD_L2 at 0.01L {cd_mid:?} vs 0.05L {cd_max:?}, {open_edges} open edges, {elapsed:?}"
        ),
    );
}

// ── 07: prior initialization direction ──────────────────────────────────

#[test]
fn c07_prior_direction() {
    let _guard = heavy_lock();
    let (prior, _) = desk_prior();
    let start = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let cloud = noisy_sphere_cloud(2000, 0.35, 0.007, &mut rng);
    let cfg = FinetuneConfig {
        iterations: 700,
        region_size: 250,
        query_count: 250,
        seed: 708,
        ..FinetuneConfig::default()
    };

    let with_prior = finetune(prior, &cloud, &cfg).unwrap();
    let (rand_net, rand_code) = random_init_like(prior, 0.01, 709);
    let without_prior = finetune_from(rand_net, rand_code, &cloud, &cfg).unwrap();

    // Final loss level of the random-initialized run.
    let n = without_prior.loss_trace.len();
    let random_final = testkit::median(&without_prior.loss_trace[n - n / 10..]);
    // First iteration at which the prior-initialized run is at or below it.
    let reach = with_prior.loss_trace.iter().position(|&v| v <= random_final);
    let half = cfg.iterations / 2;

    let gt = sphere_gt_samples(6000, 710);
    let cd_with = mesh_cd_l2(&with_prior.net, &with_prior.code, &gt, 48);
    let cd_without = mesh_cd_l2(&without_prior.net, &without_prior.code, &gt, 48);

    let elapsed = start.elapsed();
    // An empty random-init reconstruction counts as unboundedly bad.
    let cd_ok = match (cd_with, cd_without) {
        (Some(w), Some(wo)) => w <= wo,
        (Some(_), None) => true,
        _ => false,
    };
    let pass =
        matches!(reach, Some(r) if r <= half) && cd_ok && elapsed < DIRECTION_BUDGET;
    report(
        7,
        "prior-direction",
        pass,
        &format!(
            "prior reaches random's final loss {random_final:.5} at iter {reach:?} (half = {half}), CD_L2 with {cd_with:?} vs without {cd_without:?}, {elapsed:?}"
        ),
    );
}

// ── 08: local vs global mapping on a two-lobe shape ─────────────────────

#[test]
fn c08_local_vs_global_direction() {
    let _guard = heavy_lock();
    let (prior, _) = desk_prior();
    let start = Instant::now();

    // Union of two spheres where the smaller lobe is fine detail. The cloud
    // is dense (8000 points) so per-point query scales stay small relative
    // to the lobe gap, and both scopes run long enough for local reasoning
    // to resolve the small lobe that whole-shape matching smooths out.
    let union = AnalyticShape::UnionOfTwo {
        first: Box::new(AnalyticShape::Sphere { center: [-0.12, 0.0, 0.0], radius: 0.3 }),
        second: Box::new(AnalyticShape::Sphere { center: [0.36, 0.0, 0.0], radius: 0.12 }),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let pts: Vec<Point3> = (0..8000)
        .map(|_| {
            let p = union.sample_surface(&mut rng);
            [
                p[0] + 0.005 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                p[1] + 0.005 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                p[2] + 0.005 * rng.sample::<f64, _>(rand_distr::StandardNormal),
            ]
        })
        .collect();
    let raw = PointCloud::new(pts, Provenance::Noisy).unwrap();
    let (unit, transform) = raw.normalize_to_unit().unwrap();
    let mut gt_rng = ChaCha8Rng::seed_from_u64(88);
    let gt: Vec<Point3> =
        (0..6000).map(|_| transform.apply(union.sample_surface(&mut gt_rng))).collect();

    let cfg_local = FinetuneConfig {
        iterations: 2000,
        region_size: 1200,
        query_count: 250,
        seed: 81,
        ..FinetuneConfig::default()
    };
    let cfg_global = FinetuneConfig { scope: MappingScope::Global, ..cfg_local.clone() };

    let local = finetune(prior, &unit, &cfg_local).unwrap();
    let global = finetune(prior, &unit, &cfg_global).unwrap();
    let cd_local = mesh_cd_l2(&local.net, &local.code, &gt, 48);
    let cd_global = mesh_cd_l2(&global.net, &global.code, &gt, 48);

    let elapsed = start.elapsed();
    let pass = match (cd_local, cd_global) {
        (Some(l), Some(g)) => l <= g && elapsed < DIRECTION_BUDGET,
        (Some(_), None) => elapsed < DIRECTION_BUDGET,
        _ => false,
    };
    report(
        8,
        "local-vs-global-direction",
        pass,
        &format!("CD_L2 local {cd_local:?} vs global {cd_global:?}, {elapsed:?}"),
    );
}

// ── 09: splitting strategy direction ────────────────────────────────────

#[test]
fn c09_splitting_strategy_direction() {
    let _guard = heavy_lock();
    let (prior, _) = desk_prior();
    let start = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let cloud = noisy_sphere_cloud(2000, 0.35, 0.007, &mut rng);
    let cfg_knn = FinetuneConfig {
        iterations: 700,
        region_size: 250,
        query_count: 250,
        seed: 910,
        ..FinetuneConfig::default()
    };
    let cfg_voxel = FinetuneConfig {
        strategy: RegionStrategy::Voxel { grid: 4 },
        ..cfg_knn.clone()
    };

    let knn = finetune(prior, &cloud, &cfg_knn).unwrap();
    let voxel = finetune(prior, &cloud, &cfg_voxel).unwrap();
    let gt = sphere_gt_samples(6000, 911);
    let cd_knn = mesh_cd_l2(&knn.net, &knn.code, &gt, 48);
    let cd_voxel = mesh_cd_l2(&voxel.net, &voxel.code, &gt, 48);

    let elapsed = start.elapsed();
    let pass = match (cd_knn, cd_voxel) {
        (Some(k), Some(v)) => k <= v && elapsed < DIRECTION_BUDGET,
        (Some(_), None) => elapsed < DIRECTION_BUDGET,
        _ => false,
    };
    report(
        9,
        "splitting-strategy-direction",
        pass,
        &format!("CD_L2 knn {cd_knn:?} vs voxel {cd_voxel:?}, {elapsed:?}"),
    );
}

// ── 10: marching cubes convergence ──────────────────────────────────────

#[test]
fn c10_marching_cubes_convergence() {
    let start = Instant::now();
    let field = |p: Point3| vec3::norm(p) - 0.4;
    let bounds = Bounds::new([-0.5; 3], [0.5; 3]);
    let max_err = |res: usize| {
        let mesh = extract_isosurface(&field, res, bounds).unwrap();
        assert!(!mesh.is_empty());
        mesh.vertices
            .iter()
            .map(|&v| (vec3::norm(v) - 0.4).abs())
            .fold(0.0f64, f64::max)
    };
    let coarse = max_err(32);
    let fine = max_err(64);
    let cell = 1.0 / 32.0;
    let elapsed = start.elapsed();
    // "Halves with 30% slack" is read one-sided: refinement must reduce the
    // error to at most 0.65x; converging faster than 2x is success, not
    // failure.
    let pass = coarse < 2.0 * cell && fine <= 0.65 * coarse && elapsed < MC_BUDGET;
    report(
        10,
        "marching-cubes-convergence",
        pass,
        &format!(
            "max radial err {coarse:.2e} at res 32 (cell {cell:.2e}), {fine:.2e} at res 64 (ratio {:.2}), {elapsed:?}",
            fine / coarse
        ),
    );
}

// ── 11: metric sanity ───────────────────────────────────────────────────

#[test]
fn c11_metric_sanity() {
    let start = Instant::now();

    // Identity: a sampled sphere against itself.
    let mesh = extract_isosurface(
        &|p: Point3| vec3::norm(p) - 0.35,
        16,
        Bounds::new([-0.5; 3], [0.5; 3]),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let samples = sample_mesh(&mesh, 2000, &mut rng).unwrap();
    let self_report = evaluate_samples(&samples, &samples, 0.01, 0).unwrap();
    let identity_ok = self_report.cd_l1 == Some(0.0)
        && self_report.cd_l2 == Some(0.0)
        && self_report.normal_consistency == Some(1.0)
        && self_report.f_score == Some(1.0);

    // Rigid-motion invariance.
    let mut rng2 = ChaCha8Rng::seed_from_u64(1112);
    let rand_pts = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Point3> {
        (0..n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect()
    };
    let a = rand_pts(&mut rng2, 50);
    let b = rand_pts(&mut rng2, 50);
    let theta: f64 = 1.234;
    let shift = [0.4, -1.3, 2.2];
    let mv = |p: Point3| -> Point3 {
        [
            p[0] * theta.cos() - p[1] * theta.sin() + shift[0],
            p[0] * theta.sin() + p[1] * theta.cos() + shift[1],
            p[2] + shift[2],
        ]
    };
    let a2: Vec<Point3> = a.iter().map(|&p| mv(p)).collect();
    let b2: Vec<Point3> = b.iter().map(|&p| mv(p)).collect();
    let mut rigid_dev = 0.0f64;
    for order in [ChamferOrder::L1, ChamferOrder::L2] {
        let base = chamfer(&a, &b, order).unwrap();
        let moved = chamfer(&a2, &b2, order).unwrap();
        rigid_dev = rigid_dev.max((base - moved).abs());
    }
    let f_base = f_score(&a, &b, 0.25).unwrap();
    let f_moved = f_score(&a2, &b2, 0.25).unwrap();
    rigid_dev = rigid_dev.max((f_base - f_moved).abs());
    let unit_z = SurfaceSamples::new(a.clone(), vec![[0.0, 0.0, 1.0]; 50]);
    let unit_x = SurfaceSamples::new(b.clone(), vec![[1.0, 0.0, 0.0]; 50]);
    let rot_normal = |n: Point3| -> Point3 {
        [n[0] * theta.cos() - n[1] * theta.sin(), n[0] * theta.sin() + n[1] * theta.cos(), n[2]]
    };
    let unit_z2 = SurfaceSamples::new(a2.clone(), vec![rot_normal([0.0, 0.0, 1.0]); 50]);
    let unit_x2 = SurfaceSamples::new(b2.clone(), vec![rot_normal([1.0, 0.0, 0.0]); 50]);
    let nc_base = normal_consistency(&unit_z, &unit_x).unwrap();
    let nc_moved = normal_consistency(&unit_z2, &unit_x2).unwrap();
    rigid_dev = rigid_dev.max((nc_base - nc_moved).abs());

    // Brute-force Chamfer agreement on 50-point sets.
    let mut brute_dev = 0.0f64;
    let l1 = chamfer(&a, &b, ChamferOrder::L1).unwrap();
    let l2 = chamfer(&a, &b, ChamferOrder::L2).unwrap();
    brute_dev = brute_dev.max((l1 - testkit::chamfer_scan(&a, &b, false)).abs());
    brute_dev = brute_dev.max((l2 - testkit::chamfer_scan(&a, &b, true)).abs());

    let elapsed = start.elapsed();
    report(
        11,
        "metric-sanity",
        identity_ok
            && rigid_dev < METRIC_RIGID_TOL
            && brute_dev < METRIC_BRUTE_TOL
            && elapsed < METRIC_BUDGET,
        &format!(
            "identity {identity_ok}, rigid deviation {rigid_dev:.2e} (tol {METRIC_RIGID_TOL:.0e}), brute-force deviation {brute_dev:.2e} (tol {METRIC_BRUTE_TOL:.0e}), {elapsed:?}"
        ),
    );
}

// ── 12: end-to-end determinism ──────────────────────────────────────────

#[test]
fn c12_pipeline_determinism() {
    let _guard = heavy_lock();
    let start = Instant::now();
    let dir = std::env::temp_dir().join("sdfit-acceptance-determinism");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();

    let run = |tag: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let prior_config = PriorConfig {
            epochs: 300,
            queries_per_shape: 1024,
            batch_per_shape: 64,
            net: NetConfig { code_len: 16, hidden_width: 32, depth: 4, ..NetConfig::default() },
            seed: 1212,
            ..PriorConfig::default()
        };
        let prior = train_prior(
            &[AnalyticShape::Sphere { center: [0.0; 3], radius: 0.35 }],
            &prior_config,
        )
        .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1213);
        let cloud = noisy_sphere_cloud(400, 0.35, 0.01, &mut rng);
        let cfg = FinetuneConfig {
            iterations: 150,
            region_size: 80,
            query_count: 60,
            seed: 1214,
            ..FinetuneConfig::default()
        };
        let result = finetune(&prior, &cloud, &cfg).unwrap();

        let mesh =
            extract_zero_level(&result.net, &result.code, 24, Bounds::default_unit()).unwrap();
        assert!(!mesh.is_empty(), "determinism check needs a real reconstruction");
        let mesh_path = dir.join(format!("{tag}.obj"));
        sdfit_core::mesher::write_mesh(&mesh, &mesh_path).unwrap();

        let ckpt_path = dir.join(format!("{tag}.ckpt"));
        save_checkpoint(&ckpt_path, &result.net, std::slice::from_ref(&result.code)).unwrap();

        let report = if mesh.is_empty() {
            sdfit_core::metrics::MetricReport::empty(0.01, 1215)
        } else {
            let mut rng_a = ChaCha8Rng::seed_from_u64(1215);
            let mut rng_b = ChaCha8Rng::seed_from_u64(1215);
            let s = sample_mesh(&mesh, 2000, &mut rng_a).unwrap();
            let gt_pts = sphere_gt_samples(2000, 1216);
            let sphere = AnalyticShape::Sphere { center: [0.0; 3], radius: 0.35 };
            let gt_normals: Vec<Point3> = gt_pts.iter().map(|&p| sphere.normal(p)).collect();
            let gt = SurfaceSamples::new(gt_pts, gt_normals);
            let _ = &mut rng_b;
            evaluate_samples(&s, &gt, 0.01, 1215).unwrap()
        };
        let json_path = dir.join(format!("{tag}.json"));
        std::fs::write(&json_path, report.to_json()).unwrap();

        (
            std::fs::read(&mesh_path).unwrap(),
            std::fs::read(&ckpt_path).unwrap(),
            std::fs::read(&json_path).unwrap(),
        )
    };

    let first = run("first");
    let second = run("second");
    let elapsed = start.elapsed();
    let pass = first == second;
    report(
        12,
        "pipeline-determinism",
        pass,
        &format!(
            "mesh {} bytes, checkpoint {} bytes, metrics {} bytes, byte-identical: {pass}, {elapsed:?}",
            first.0.len(),
            first.1.len(),
            first.2.len()
        ),
    );
}

/// The desk mesh used by several criteria must itself be sane: closed and
/// non-trivial. Kept separate so failures point at the mesher rather than
/// at a direction check.
#[test]
fn desk_mesh_is_closed() {
    let mesh = extract_isosurface(
        &|p: Point3| vec3::norm(p) - 0.35,
        32,
        Bounds::default_unit(),
    )
    .unwrap();
    assert!(mesh.triangles.len() > 500);
    let open = mesh.edge_incidence().values().filter(|&&c| c != 2).count();
    assert_eq!(open, 0);
    let _ = TriangleMesh::empty();
}
