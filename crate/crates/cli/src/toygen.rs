use std::path::PathBuf;

use boxforge_core::dataset::{generate_toy_dataset, split_dataset, SplitFractions};

use crate::archive::{create_dir, write_run_info};
use crate::{CliError, RunConfig};

#[derive(Debug, Clone)]
pub struct ToygenOutcome {
    pub manifest: PathBuf,
    /// Records per split: diffusion-train, seg-train, test.
    pub counts: [usize; 3],
}

/// Writes `toy.count` procedural samples into `paths.output_dir` and
/// assigns the three-way split.
pub fn toygen(cfg: &RunConfig) -> Result<ToygenOutcome, CliError> {
    let out = cfg.output_dir()?;
    create_dir(out)?;
    let t = &cfg.toy;
    let mut manifest = generate_toy_dataset(&t.spec, t.count, out)?;
    let counts = split_dataset(&mut manifest, SplitFractions(t.fractions), t.split_seed)?;
    let path = out.join("manifest.jsonl");
    manifest.save(&path)?;
    write_run_info(out, "toygen", cfg, &[])?;
    log::info!("wrote {} toy samples to {} (split {counts:?})", t.count, out.display());
    Ok(ToygenOutcome { manifest: path, counts })
}
