//! Broadcasted residual learning for keyword spotting.
//!
//! The crate covers the convolution, normalization and pooling kernels with analytic
//! backward passes, the BC-ResNet block and model builder, an analytic parameter and
//! multiply counter, a log-Mel audio frontend with augmentation, Speech Commands dataset
//! handling, an SGD trainer and a finite-difference gradient checker.

pub mod audio;
pub mod block;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod ops;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Shape, Tensor};
