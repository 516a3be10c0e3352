//! The `boxforge` pipeline: toy data generation, training, sampling,
//! alignment evaluation and the downstream segmentation comparison.

mod archive;
pub mod config;
mod downstream;
mod error;
mod evaluate;
mod generate;
mod maps;
mod sample;
mod serve;
mod toygen;
mod train;

pub use archive::{sha256_file, write_run_info, RunInfo};
pub use config::RunConfig;
pub use downstream::{downstream, DownstreamOutcome, RegimeResult};
pub use error::CliError;
pub use evaluate::{evaluate, EvaluateOutcome};
pub use generate::{generate_layouts, Layout};
pub use maps::{dump_maps, MapsDumpArgs, MapsHeader};
pub use sample::{sample, SampleOutcome};
pub use serve::serve;
pub use toygen::{toygen, ToygenOutcome};
pub use train::{train, training_examples, TrainOutcome};
