use std::sync::Arc;

use boxforge_nn::Checkpoint;
use boxforge_service::{DiffusionEngine, SampleEngine};

use crate::{CliError, RunConfig};

/// Runs the generation service with the checkpoint at `paths.checkpoint`
/// until the process is stopped.
pub fn serve(cfg: &RunConfig) -> Result<(), CliError> {
    let path = RunConfig::require(&cfg.paths.checkpoint, "checkpoint")?;
    let ckpt = Checkpoint::load(path)?;
    let name = path.file_name().map_or_else(|| "checkpoint".into(), |n| n.to_string_lossy().into_owned());
    let engine: Arc<dyn SampleEngine> = Arc::new(DiffusionEngine::from_checkpoint(&ckpt, name)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(boxforge_service::serve(engine, cfg.service.clone()))
        .map_err(|e| CliError::Runtime(format!("service stopped: {e}")))
}
