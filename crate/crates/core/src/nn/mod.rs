//! Minimal dense-tensor network kernel: dense, 1D convolution, 1D max
//! pooling and flatten layers, softmax/cross-entropy and MSE objectives,
//! reverse-mode gradients, and sgd/adam updates. All arithmetic is `f64`.

mod layers;
mod loss;
mod network;
mod optim;
mod tensor;

use thiserror::Error;

pub use layers::{
    conv1d_forward, dense_forward, maxpool1d_forward, Activation, Conv1DLayer, DenseLayer, MaxPool1DLayer,
};
pub use loss::{cross_entropy, mse, softmax, PROB_FLOOR};
pub use network::{Layer, LayerSpec, Network, Objective};
pub use optim::{optimizer_step, Algorithm, OptimizerConfig, OptimizerState};
pub use tensor::Tensor;

pub(crate) use loss::softmax_row;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input length {len} is shorter than the required {needed}")]
    InputTooShort { len: usize, needed: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("no cached forward pass for this batch")]
    StaleCache,
    #[error("non-finite gradient {value} in parameter {param} at index {index}")]
    NonFiniteGradient { param: usize, index: usize, value: f64 },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}
