//! Training-time augmentation: photometric distortion, scale jitter with
//! crop/pad, and the distortion preview grid.

mod geometric;
mod photometric;
mod preview;
mod rng;

pub use geometric::{geometric_pipeline, geometric_pipeline_with_scale, GeometricConfig};
pub use photometric::{
    color_transform, photometric_distortion, photometric_distortion_traced, ColorKind,
    PhotometricConfig,
};
pub use preview::{preview_grid, preview_grid_with_gutter, DEFAULT_GUTTER};
pub use rng::RngStream;
