//! Run configuration: one JSON document drives every subcommand, and each
//! run writes the exact configuration it used into its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use sdfit_core::finetune::FinetuneConfig;
use sdfit_core::prior::{AnalyticShape, PriorConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub id: String,
    #[serde(flatten)]
    pub shape: AnalyticShape,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub shapes: Vec<ShapeEntry>,
    pub points_per_cloud: usize,
    /// Per-axis noise standard deviation in model units.
    pub noise_sigma: f64,
    pub prior: PriorConfig,
    pub finetune: FinetuneConfig,
    pub mesh_resolution: usize,
    /// Extraction bounds: the unit box inflated by this fraction.
    pub mesh_bounds_inflate: f64,
    pub metric_samples: usize,
    pub fscore_tau: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/out"),
            shapes: vec![
                ShapeEntry {
                    id: "sphere".into(),
                    shape: AnalyticShape::Sphere { center: [0.0; 3], radius: 0.35 },
                },
                ShapeEntry {
                    id: "box".into(),
                    shape: AnalyticShape::Box {
                        center: [0.0; 3],
                        half_extents: [0.3, 0.25, 0.2],
                    },
                },
                ShapeEntry {
                    id: "torus".into(),
                    shape: AnalyticShape::Torus { center: [0.0; 3], major: 0.3, minor: 0.1 },
                },
            ],
            points_per_cloud: 2000,
            noise_sigma: 0.005,
            prior: PriorConfig::default(),
            finetune: FinetuneConfig::default(),
            mesh_resolution: 64,
            mesh_bounds_inflate: 0.05,
            metric_samples: 100_000,
            fscore_tau: 0.01,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let config: ExperimentConfig = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                Ok(config)
            }
        }
    }

    /// Write the exact configuration into the output directory so every run
    /// is reproducible from its artifacts alone.
    pub fn persist(&self, out_dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        let path = out_dir.join("config.json");
        let text = serde_json::to_string_pretty(self).expect("config is serializable");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn mesh_bounds(&self) -> sdfit_core::mesher::Bounds {
        let half = 0.5 * (1.0 + self.mesh_bounds_inflate);
        sdfit_core::mesher::Bounds::new([-half; 3], [half; 3])
    }

    pub fn shape_by_id(&self, id: &str) -> anyhow::Result<&ShapeEntry> {
        self.shapes
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| anyhow::anyhow!("shape {id:?} is not in the roster"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let config = ExperimentConfig::default();
        let text = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.shapes.len(), config.shapes.len());
        assert_eq!(back.prior, config.prior);
        assert_eq!(back.finetune, config.finetune);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let text = r#"{ "seed": 9, "mesh_resolution": 32 }"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.mesh_resolution, 32);
        assert_eq!(config.points_per_cloud, 2000);
    }
}
