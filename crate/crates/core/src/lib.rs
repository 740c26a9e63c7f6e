//! Off-road semantic segmentation toolkit.
//!
//! The crate bundles everything needed to train and evaluate a
//! UPerNet-style segmentation network on GOOSE-layout data:
//!
//! - [`taxonomy`]: the 9-class challenge taxonomy and raw label remapping.
//! - [`augmentation`]: photometric distortion, scale jitter with crop/pad,
//!   and the distortion preview grid.
//! - [`model`]: a residual pyramid backbone, the UPerNet decoder, the
//!   segmentation head and pixel-wise cross-entropy, with reverse-mode
//!   gradients.
//! - [`optimization`]: AdamW, the poly learning-rate schedule and the
//!   parameter EMA.
//! - [`evaluation`]: confusion matrices, per-class IoU and report rendering.
//! - [`pipeline`]: configuration, dataset indexing, the training loop,
//!   checkpoints and prediction.

pub mod augmentation;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod optimization;
pub mod pipeline;
pub mod raster;
pub mod resample;
pub mod taxonomy;

pub use error::{Error, Result};
pub use raster::{Image, LabelMap};
pub use taxonomy::{Mapping, Taxonomy, IGNORE_ID, NUM_CLASSES};
