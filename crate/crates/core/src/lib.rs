//! Moth detection in pheromone-trap images.
//!
//! The crate covers the whole pipeline: a small convolutional network trained
//! by backpropagation ([`nncore`]), image preprocessing and patch extraction
//! ([`imaging`]), training-set construction with augmentation and hard-negative
//! mining ([`dataset`]), sliding-window detection with non-maximum suppression
//! ([`detector`]), object- and image-level evaluation ([`evaluation`]) and a
//! seeded synthetic trap-scene generator ([`synthgen`]). [`pipeline`] glues the
//! stages together.
//!
//! The numeric core is generic over the scalar type (see [`Scalar`]); the
//! aliases below fix it to `f64`, which is what training and inference use by
//! default.

pub mod dataset;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod nncore;
pub mod pipeline;
pub mod scalar;
pub mod synthgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = nncore::Tensor<f64>;
pub type Tensor32 = nncore::Tensor<f32>;
pub type Network64 = nncore::Network<f64>;
pub type Network32 = nncore::Network<f32>;
pub type Gradients64 = nncore::Gradients<f64>;
pub type TrainConfig64 = nncore::TrainConfig<f64>;
