//! A small convolutional network with reverse-mode gradients, trained from
//! scratch.

pub mod gradcheck;
mod layers;
mod network;
mod optim;
mod real;
mod tensor;
mod train;
mod weights;

pub use layers::{derive_seed, mix64, Cache, Conv2d, Dense, Layer, LayerSpec, Mode, ParamGrad, PassCtx};
pub use network::{argmax, Architecture, Network, Pass, CHUNK};
pub use optim::{Optimizer, OptimizerKind};
pub use real::{gemm, Real};
pub use tensor::Tensor;
pub use train::{evaluate, evaluate_with, train, train_with, EpochReport, TrainConfig, TrainReport};
pub use weights::{
    decode_weights, encode_weights, load_weights, load_weights_expecting, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input shape {got:?} does not match expected {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {0} is outside the network's classes")]
    BadLabel(u8),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("corrupt weight file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
