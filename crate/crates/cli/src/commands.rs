//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use sdfit_core::finetune::{
    finetune, finetune_from, FinetuneConfig, FinetuneResult, MappingScope, RegionStrategy,
};
use sdfit_core::geometry::{read_point_cloud, write_point_cloud, PointCloud, Provenance, UnitTransform};
use sdfit_core::mesher::{extract_zero_level, read_mesh, write_mesh, TriangleMesh};
use sdfit_core::metrics::{evaluate_samples, sample_mesh, ChamferOrder, MetricReport, SurfaceSamples};
use sdfit_core::prior::{train_prior_from, AnalyticShape, TrainedPrior};
use sdfit_core::sdf::{load_checkpoint, save_checkpoint, LatentCode, SdfNetwork};
use sdfit_core::vec3::Point3;

use crate::config::{ExperimentConfig, ShapeEntry};

#[derive(Serialize, Deserialize)]
struct DataManifest {
    shapes: Vec<ShapeEntry>,
    noise_sigma: f64,
    points_per_cloud: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct PriorManifest {
    shape_ids: Vec<String>,
    alpha: f64,
    net_lr: f64,
    embed_lr: f64,
    lr_halve_every: usize,
    epochs: usize,
    seed: u64,
    final_loss: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct EvalReport {
    recon: PathBuf,
    ground_truth: String,
    noise_sigma: f64,
    metrics: MetricReport,
}

/// Surface samples of one roster shape with analytic normals.
fn sample_shape_surface(shape: &AnalyticShape, n: usize, rng: &mut ChaCha8Rng) -> SurfaceSamples {
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let p = shape.sample_surface(rng);
        points.push(p);
        normals.push(shape.normal(p));
    }
    SurfaceSamples::new(points, normals)
}

fn clean_cloud(shape: &AnalyticShape, n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let points: Vec<Point3> = (0..n).map(|_| shape.sample_surface(rng)).collect();
    PointCloud::new(points, Provenance::Clean).expect("surface samples are finite")
}

fn write_loss_csv(path: &Path, trace: &[f64]) -> anyhow::Result<()> {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_make_data(config: &ExperimentConfig) -> anyhow::Result<()> {
    config.persist(&config.out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for entry in &config.shapes {
        let clean = clean_cloud(&entry.shape, config.points_per_cloud, &mut rng);
        let noisy = clean.add_noise(config.noise_sigma, &mut rng);
        write_point_cloud(&clean, &config.out_dir.join(format!("{}_clean.xyz", entry.id)))?;
        write_point_cloud(&noisy, &config.out_dir.join(format!("{}_noisy.xyz", entry.id)))?;
    }
    let manifest = DataManifest {
        shapes: config.shapes.clone(),
        noise_sigma: config.noise_sigma,
        points_per_cloud: config.points_per_cloud,
        seed: config.seed,
    };
    let path = config.out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializable"))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} clean/noisy cloud pairs to {}", config.shapes.len(), config.out_dir.display());
    Ok(())
}

pub fn cmd_train_prior(config: &ExperimentConfig, resume: Option<&Path>) -> anyhow::Result<()> {
    config.persist(&config.out_dir)?;
    let shapes: Vec<AnalyticShape> = config.shapes.iter().map(|e| e.shape.clone()).collect();
    let init = match resume {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };
    let trained = train_prior_from(&shapes, &config.prior, init)?;

    save_checkpoint(&config.out_dir.join("prior.ckpt"), &trained.net, &trained.codes)?;
    write_loss_csv(&config.out_dir.join("prior_loss.csv"), &trained.loss_trace)?;
    let manifest = PriorManifest {
        shape_ids: config.shapes.iter().map(|e| e.id.clone()).collect(),
        alpha: config.prior.alpha,
        net_lr: config.prior.net_lr,
        embed_lr: config.prior.embed_lr,
        lr_halve_every: config.prior.lr_halve_every,
        epochs: config.prior.epochs,
        seed: config.prior.seed,
        final_loss: trained.loss_trace.last().copied(),
    };
    let path = config.out_dir.join("prior_manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializable"))
        .with_context(|| format!("writing {}", path.display()))?;
    println!(
        "trained prior on {} shapes for {} epochs (final loss {:?})",
        shapes.len(),
        config.prior.epochs,
        manifest.final_loss
    );
    Ok(())
}

fn check_architecture(config: &ExperimentConfig, net: &SdfNetwork) -> anyhow::Result<()> {
    let cfg = &config.prior.net;
    let mut expected_sizes = Vec::with_capacity(cfg.depth + 1);
    expected_sizes.push(3 + cfg.code_len);
    for _ in 1..cfg.depth {
        expected_sizes.push(cfg.hidden_width);
    }
    expected_sizes.push(1);
    let expected = format!(
        "layers {:?}, activation {:?}, skip {:?}",
        expected_sizes, cfg.activation, cfg.skip_at
    );
    let got = net.describe();
    if got != expected {
        return Err(sdfit_core::Error::ArchitectureMismatch { file: got, expected }.into());
    }
    Ok(())
}

pub fn cmd_reconstruct(
    config: &ExperimentConfig,
    cloud_path: &Path,
    prior_path: &Path,
) -> anyhow::Result<()> {
    config.persist(&config.out_dir)?;
    let (net, codes) = load_checkpoint(prior_path)?;
    check_architecture(config, &net)?;
    let raw = read_point_cloud(cloud_path, Provenance::Noisy)?;
    let (unit, transform) = raw.normalize_to_unit()?;

    let prior = TrainedPrior { net, codes, loss_trace: Vec::new() };
    let result = finetune(&prior, &unit, &config.finetune)?;
    report_skips(&result);

    let mesh = extract_zero_level(
        &result.net,
        &result.code,
        config.mesh_resolution,
        config.mesh_bounds(),
    )?;
    let world = mesh.map_vertices(|v| transform.invert(v));
    // An empty reconstruction still writes a valid zero-face file.
    let world = match world {
        Ok(m) => m,
        Err(_) if mesh.is_empty() => TriangleMesh::empty(),
        Err(e) => return Err(e.into()),
    };
    write_mesh(&world, &config.out_dir.join("recon.obj"))?;
    write_loss_csv(&config.out_dir.join("finetune_loss.csv"), &result.loss_trace)?;
    save_checkpoint(
        &config.out_dir.join("finetuned.ckpt"),
        &result.net,
        std::slice::from_ref(&result.code),
    )?;
    let tpath = config.out_dir.join("transform.json");
    fs::write(&tpath, serde_json::to_string_pretty(&transform).expect("serializable"))
        .with_context(|| format!("writing {}", tpath.display()))?;
    println!(
        "reconstructed {} -> {} ({} vertices, {} triangles)",
        cloud_path.display(),
        config.out_dir.join("recon.obj").display(),
        world.vertices.len(),
        world.triangles.len()
    );
    Ok(())
}

fn report_skips(result: &FinetuneResult) {
    if result.skipped_iterations > 0 {
        eprintln!(
            "warning: {} iterations skipped after repeated vanishing gradients",
            result.skipped_iterations
        );
    }
}

pub fn cmd_denoise(
    config: &ExperimentConfig,
    cloud_path: &Path,
    checkpoint_path: &Path,
) -> anyhow::Result<()> {
    config.persist(&config.out_dir)?;
    let (net, codes) = load_checkpoint(checkpoint_path)?;
    let code = codes
        .first()
        .cloned()
        .ok_or_else(|| anyhow::anyhow!("checkpoint has no embedding"))?;
    let raw = read_point_cloud(cloud_path, Provenance::Noisy)?;
    let (unit, transform) = raw.normalize_to_unit()?;
    let (denoised_unit, warnings) = net.denoise_points(&code, &unit)?;
    if warnings > 0 {
        eprintln!("warning: {warnings} points kept unchanged (vanishing gradient)");
    }
    let denoised = denoised_unit.transformed(&UnitTransform {
        // invert: p/scale + center expressed as a forward transform
        center: [
            -transform.center[0] * transform.scale,
            -transform.center[1] * transform.scale,
            -transform.center[2] * transform.scale,
        ],
        scale: 1.0 / transform.scale,
    });
    let ext = cloud_path.extension().and_then(|e| e.to_str()).unwrap_or("xyz");
    let out = config.out_dir.join(format!("denoised.{ext}"));
    write_point_cloud(&denoised.with_provenance(Provenance::Denoised), &out)?;
    println!("denoised {} -> {}", cloud_path.display(), out.display());
    Ok(())
}

pub enum GroundTruth<'a> {
    ShapeId(&'a str),
    MeshPath(&'a Path),
}

pub fn cmd_eval(
    config: &ExperimentConfig,
    recon_path: &Path,
    gt: GroundTruth<'_>,
) -> anyhow::Result<()> {
    config.persist(&config.out_dir)?;
    let recon = read_mesh(recon_path)?;

    let (gt_label, report) = if recon.is_empty() {
        let label = match gt {
            GroundTruth::ShapeId(id) => id.to_string(),
            GroundTruth::MeshPath(p) => p.display().to_string(),
        };
        (label, MetricReport::empty(config.fscore_tau, config.seed))
    } else {
        // Each surface gets its own identically seeded sampler, so a mesh
        // compared against itself scores exactly zero distance.
        let mut rng_a = ChaCha8Rng::seed_from_u64(config.seed);
        let mut rng_b = ChaCha8Rng::seed_from_u64(config.seed);
        let recon_samples = sample_mesh(&recon, config.metric_samples, &mut rng_a)?;
        let (label, gt_samples) = match gt {
            GroundTruth::ShapeId(id) => {
                let entry = config.shape_by_id(id)?;
                (
                    id.to_string(),
                    sample_shape_surface(&entry.shape, config.metric_samples, &mut rng_b),
                )
            }
            GroundTruth::MeshPath(p) => {
                let mesh = read_mesh(p)?;
                (p.display().to_string(), sample_mesh(&mesh, config.metric_samples, &mut rng_b)?)
            }
        };
        let report = evaluate_samples(&recon_samples, &gt_samples, config.fscore_tau, config.seed)?;
        (label, report)
    };

    let out = EvalReport {
        recon: recon_path.to_path_buf(),
        ground_truth: gt_label,
        noise_sigma: config.noise_sigma,
        metrics: report,
    };
    let path = config.out_dir.join("metrics.json");
    fs::write(&path, serde_json::to_string_pretty(&out).expect("serializable"))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{}", serde_json::to_string(&out.metrics).expect("serializable"));
    Ok(())
}

// ── Ablations ───────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationAxis {
    /// Local region size K in {500, 1000, 3000, 5000}.
    RegionSize,
    /// Region splitting strategy: voxel, fixed-radius sphere, knn sphere.
    Strategy,
    /// Local vs. global statistical reasoning.
    Scope,
    /// Embedding length in {128, 256, 512}.
    EmbeddingSize,
    /// Noise sigma in {0.01, 0.05, 0.07} of the bounding-box edge L.
    NoiseLevel,
    /// Initialization: with prior, without, frozen parameters, random embedding.
    Prior,
}

struct Cell {
    label: String,
    result: anyhow::Result<f64>,
}

pub fn cmd_ablate(config: &ExperimentConfig, axis: AblationAxis) -> anyhow::Result<()> {
    config.persist(&config.out_dir)?;
    let entry = config
        .shapes
        .first()
        .ok_or_else(|| anyhow::anyhow!("the roster is empty"))?;
    let shapes: Vec<AnalyticShape> = config.shapes.iter().map(|e| e.shape.clone()).collect();

    // The base cloud; noise cells re-noise the clean points per level.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let clean = clean_cloud(&entry.shape, config.points_per_cloud, &mut rng);
    let longest = clean.longest_edge();
    let noisy = clean.add_noise(config.noise_sigma, &mut rng);

    // Most axes share one prior; the embedding axis retrains per cell.
    let mut shared_prior: Option<TrainedPrior> = None;
    let mut prior = |shapes: &[AnalyticShape]| -> anyhow::Result<TrainedPrior> {
        if shared_prior.is_none() {
            shared_prior = Some(train_prior_from(shapes, &config.prior, None)?);
        }
        Ok(shared_prior.clone().expect("just set"))
    };

    let mut cells: Vec<Cell> = Vec::new();
    match axis {
        AblationAxis::RegionSize => {
            for k in [500usize, 1000, 3000, 5000] {
                let mut cfg = config.finetune.clone();
                cfg.region_size = k.min(config.points_per_cloud);
                cfg.query_count = cfg.query_count.min(cfg.region_size);
                let p = prior(&shapes)?;
                cells.push(run_cell(config, &entry.shape, &noisy, &p, &cfg, format!("{k}")));
            }
        }
        AblationAxis::Strategy => {
            for (label, strategy) in [
                ("voxel", RegionStrategy::Voxel { grid: 4 }),
                ("sphere_fixed", RegionStrategy::SphereFixed { radius: 0.1 }),
                ("sphere_knn", RegionStrategy::SphereKnn),
            ] {
                let mut cfg = config.finetune.clone();
                cfg.strategy = strategy;
                let p = prior(&shapes)?;
                cells.push(run_cell(config, &entry.shape, &noisy, &p, &cfg, label.into()));
            }
        }
        AblationAxis::Scope => {
            for (label, scope) in [("local", MappingScope::Local), ("global", MappingScope::Global)]
            {
                let mut cfg = config.finetune.clone();
                cfg.scope = scope;
                let p = prior(&shapes)?;
                cells.push(run_cell(config, &entry.shape, &noisy, &p, &cfg, label.into()));
            }
        }
        AblationAxis::EmbeddingSize => {
            for code_len in [128usize, 256, 512] {
                let mut prior_cfg = config.prior.clone();
                prior_cfg.net.code_len = code_len;
                let label = format!("{code_len}");
                match train_prior_from(&shapes, &prior_cfg, None) {
                    Ok(p) => cells.push(run_cell(
                        config,
                        &entry.shape,
                        &noisy,
                        &p,
                        &config.finetune,
                        label,
                    )),
                    Err(e) => cells.push(Cell { label, result: Err(e.into()) }),
                }
            }
        }
        AblationAxis::NoiseLevel => {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(17));
            for level in [0.01f64, 0.05, 0.07] {
                let sigma = level * longest;
                let cloud = clean.add_noise(sigma, &mut noise_rng);
                let p = prior(&shapes)?;
                cells.push(run_cell(
                    config,
                    &entry.shape,
                    &cloud,
                    &p,
                    &config.finetune,
                    format!("{level}L"),
                ));
            }
        }
        AblationAxis::Prior => {
            let p = prior(&shapes)?;
            // Full prior initialization.
            cells.push(run_cell(config, &entry.shape, &noisy, &p, &config.finetune, "with_prior".into()));
            // Random parameters and embedding.
            let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(31));
            let rand_net = SdfNetwork::init(&config.prior.net, &mut init_rng);
            let rand_code =
                LatentCode::random(config.prior.net.code_len, config.prior.code_init_std, &mut init_rng);
            cells.push(run_cell_from(
                config,
                &entry.shape,
                &noisy,
                rand_net,
                rand_code.clone(),
                &config.finetune,
                "without_prior".into(),
            ));
            // Prior parameters frozen; only the embedding optimizes.
            let mut frozen_cfg = config.finetune.clone();
            frozen_cfg.freeze_params = true;
            cells.push(run_cell(config, &entry.shape, &noisy, &p, &frozen_cfg, "fixed_param".into()));
            // Prior parameters with a random embedding.
            cells.push(run_cell_from(
                config,
                &entry.shape,
                &noisy,
                p.net.clone(),
                rand_code,
                &config.finetune,
                "without_embed".into(),
            ));
        }
    }

    let axis_name = format!("{axis:?}");
    let mut csv = String::from("axis,value,cd_l2,status\n");
    for cell in &cells {
        match &cell.result {
            Ok(cd) => csv.push_str(&format!("{axis_name},{},{cd},ok\n", cell.label)),
            Err(e) => csv.push_str(&format!("{axis_name},{},,error: {e}\n", cell.label)),
        }
    }
    let path = config.out_dir.join(format!("ablation_{}.csv", axis_name.to_lowercase()));
    fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    print!("{csv}");
    Ok(())
}

fn run_cell(
    config: &ExperimentConfig,
    gt_shape: &AnalyticShape,
    noisy: &PointCloud,
    prior: &TrainedPrior,
    cfg: &FinetuneConfig,
    label: String,
) -> Cell {
    let result = cell_cd_l2(config, gt_shape, noisy, |unit| finetune(prior, unit, cfg));
    Cell { label, result }
}

#[allow(clippy::too_many_arguments)]
fn run_cell_from(
    config: &ExperimentConfig,
    gt_shape: &AnalyticShape,
    noisy: &PointCloud,
    net: SdfNetwork,
    code: LatentCode,
    cfg: &FinetuneConfig,
    label: String,
) -> Cell {
    let result = cell_cd_l2(config, gt_shape, noisy, move |unit| {
        finetune_from(net.clone(), code.clone(), unit, cfg)
    });
    Cell { label, result }
}

fn cell_cd_l2(
    config: &ExperimentConfig,
    gt_shape: &AnalyticShape,
    noisy: &PointCloud,
    run: impl FnOnce(&PointCloud) -> sdfit_core::Result<FinetuneResult>,
) -> anyhow::Result<f64> {
    let (unit, transform) = noisy.normalize_to_unit()?;
    let result = run(&unit)?;
    let mesh = extract_zero_level(
        &result.net,
        &result.code,
        config.mesh_resolution,
        config.mesh_bounds(),
    )?;
    if mesh.is_empty() {
        anyhow::bail!("empty reconstruction");
    }
    let world = mesh.map_vertices(|v| transform.invert(v))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(101));
    let samples = sample_mesh(&world, config.metric_samples, &mut rng)?;
    let gt: Vec<Point3> =
        (0..config.metric_samples).map(|_| gt_shape.sample_surface(&mut rng)).collect();
    Ok(sdfit_core::metrics::chamfer(&samples.points, &gt, ChamferOrder::L2)?)
}
