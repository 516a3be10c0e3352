//! Neural components of boxforge on a small CPU autodiff engine: the UNet
//! noise predictor, its training loop and checkpoint format, and the
//! segmentation network used for downstream evaluation.

mod checkpoint;
mod denoiser;
pub mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod scalar;
pub mod segmenter;
mod tensor;
mod train;
mod unet;

use std::path::PathBuf;

use boxforge_core::diffusion::{DiffusionError, ScheduleError};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use denoiser::{noised_input, training_loss, Denoiser, JointPredictor, Model, NoisedBatch};
pub use graph::{Gradients, Graph, Var};
pub use optim::{AdamW, AdamWConfig};
pub use params::{ParamBuilder, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{EpochLoss, LrSchedule, TrainConfig, TrainExample, TrainState, Trainer};
pub use segmenter::{train_segmenter, Segmenter, SegmenterConfig};
pub use unet::{timestep_embedding, DenoiserConfig, UNet};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: u64, loss: f64 },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
