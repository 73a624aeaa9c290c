//! Differentiable kernels. Each forward has a matching `*_backward`.

pub mod activation;
pub mod conv;
pub mod dropout;
pub mod norm;
pub mod pool;
pub mod sgd;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, swish, swish_backward};
pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvSpec};
pub use dropout::{channel_dropout, channel_dropout_backward};
pub use norm::{
    batch_norm, normalize, normalize_backward, normalize_step, subspectral_norm, NormCache,
    NormGrads, NormParams,
};
pub use pool::{
    avg_pool_freq, avg_pool_freq_backward, avg_pool_time, avg_pool_time_backward, broadcast_freq,
    broadcast_freq_backward, max_pool_freq, max_pool_freq_backward,
};
pub use sgd::{sgd_step, SgdConfig};
