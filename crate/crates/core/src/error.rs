//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("degenerate point cloud: all points coincide")]
    DegenerateCloud,

    #[error("non-finite coordinate in point {index}")]
    NonFiniteCoordinate { index: usize },

    #[error("k out of range: k={k}, indexed points={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("region size {k} exceeds cloud size {n}")]
    RegionTooLarge { k: usize, n: usize },

    #[error("no occupied cell found after {retries} voxel draws")]
    EmptyRegion { retries: usize },

    #[error("node {0} is not on the tape")]
    InvalidNode(usize),

    #[error("non-finite gradient for parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite loss: {context}")]
    NonFiniteLoss { context: String },

    #[error("vanishing gradient at query ({0}, {1}, {2})")]
    VanishingGradient(f64, f64, f64),

    #[error("latent code length {got} does not match network input (expected {expected})")]
    CodeLengthMismatch { got: usize, expected: usize },

    #[error("parameter vector length {got} does not match architecture ({expected})")]
    ParamLengthMismatch { got: usize, expected: usize },

    #[error("point set sizes differ: {a} vs {b}")]
    SizeMismatch { a: usize, b: usize },

    #[error("point set size {n} exceeds solver cap {cap}; split into smaller batches")]
    CapExceeded { n: usize, cap: usize },

    #[error("empty point set")]
    EmptySet,

    #[error("mesh has no faces")]
    EmptyMesh,

    #[error("mesh has zero total surface area")]
    ZeroAreaMesh,

    #[error("normal {index} is not unit length (|n| = {norm})")]
    NonUnitNormal { index: usize, norm: f64 },

    #[error("non-finite field sample at lattice ({0}, {1}, {2})")]
    NonFiniteField(usize, usize, usize),

    #[error("checkpoint architecture mismatch: file has {file}, expected {expected}")]
    ArchitectureMismatch { file: String, expected: String },

    #[error("invalid {what}: {detail}")]
    InvalidInput { what: &'static str, detail: String },

    #[error("malformed {format} data: {detail}")]
    Parse { format: &'static str, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
