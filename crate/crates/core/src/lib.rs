//! Learning neural signed distance fields from single noisy point clouds.
//!
//! The pipeline has two stages. A shared decoder network is first trained
//! against analytic signed distances of a small shape roster, with one
//! learnable embedding per shape (`prior`). At inference time the trained
//! decoder and a fresh embedding are finetuned on one noisy cloud by
//! repeatedly matching the pulled-back zero-level set of the field against
//! random subsets of a local point neighborhood under an exact earth mover's
//! distance (`finetune`). Meshes come out of `mesher`, denoised clouds out of
//! [`SdfNetwork::denoise_points`], and reconstruction quality numbers out of
//! `metrics`.
//!
//! Everything runs on a scalar reverse-mode tape (`autodiff`) in `f64`; the
//! pulling operation stays on the tape so losses backpropagate through the
//! spatial gradient of the field.

pub mod autodiff;
pub mod error;
pub mod finetune;
pub mod geometry;
pub mod mesher;
pub mod metrics;
pub mod prior;
pub mod sdf;
pub mod testkit;
pub mod transport;
pub mod vec3;

pub use autodiff::{AdamState, NodeId, Tape};
pub use error::{Error, Result};
pub use finetune::{FinetuneConfig, FinetuneResult, MappingScope};
pub use geometry::{KnnIndex, LocalRegion, PointCloud, Provenance, SplitStrategy, UnitTransform};
pub use mesher::TriangleMesh;
pub use metrics::MetricReport;
pub use prior::{AnalyticShape, PriorConfig, TrainedPrior};
pub use sdf::{Activation, LatentCode, SdfNetwork};
pub use transport::Matching;
