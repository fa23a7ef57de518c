//! Layers with hand-written backward passes and the GSE ResNeXt assembly.
//!
//! Activations are `(batch, channel, height, width)`. Each layer caches what
//! its backward pass needs during `forward` and accumulates parameter
//! gradients into [`Param::grad`] during `backward`.

mod activation;
mod block;
mod conv;
mod linear;
mod loss;
mod model;
mod norm;
mod param;
mod pool;
mod se;

pub use activation::Relu;
pub use block::{Bottleneck, BottleneckSpec};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGeom};
pub use linear::Linear;
pub use loss::{softmax, softmax_cross_entropy};
pub use model::{GseResNeXt, ModelConfig, StageShape, StageSpec, Stem};
pub use norm::BatchNorm2d;
pub use param::{Layer, Mode, Param, ParamKind};
pub use pool::{GlobalAvgPool, MaxPool2d};
pub use se::SqueezeExcite;
