//! The segmentation network and its loss.
//!
//! Everything runs in `f64` on the CPU. [`SegNet::forward`] records a
//! [`Tape`] whose [`Tape::backward`] yields parameter gradients.

mod loss;
mod net;
mod params;
mod tape;
mod tensor;

pub use loss::{argmax, cross_entropy_loss, cross_entropy_sum, softmax, LossOutput};
pub use net::{normalize_batch, FeaturePyramid, ModelConfig, NormKind, SegNet, STRIDES};
pub use params::{Init, Param, ParamId, ParamSet, ParamSpec};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
