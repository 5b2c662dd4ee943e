//! Point clouds, normalization, exact nearest-neighbor search, and the
//! local-region machinery that drives statistical reconstruction.

mod cloud;
mod io;
mod kdtree;
mod region;

pub use cloud::{PointCloud, Provenance, UnitTransform};
pub use io::{read_point_cloud, write_point_cloud, CloudFormat};
pub use kdtree::KnnIndex;
pub use region::{
    compute_sampling_scales, region_with_scales, sample_local_region, sample_queries,
    sample_query, sample_without_replacement, sampling_scale, split_strategy,
    split_strategy_scaled, LocalRegion, SplitStrategy,
};
