use std::path::PathBuf;

use boxforge_core::dataset::{read_mask, Manifest};
use boxforge_core::geometry::validate_boxes;
use boxforge_core::metrics::{AlignmentAccumulator, AlignmentReport};

use crate::archive::{create_dir, write_json, write_run_info, write_text};
use crate::sample::match_mode;
use crate::{CliError, RunConfig};

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub report: AlignmentReport,
    pub records: usize,
    pub report_path: PathBuf,
}

/// SAE/EBR of the masks in `paths.synthetic_manifest` (or `paths.manifest`
/// when no synthetic manifest is set) against their own boxes.
pub fn evaluate(cfg: &RunConfig) -> Result<EvaluateOutcome, CliError> {
    let (manifest_path, key) = match (&cfg.paths.synthetic_manifest, &cfg.paths.manifest) {
        (Some(p), _) => (p.as_path(), "synthetic_manifest"),
        (None, Some(p)) => (p.as_path(), "manifest"),
        (None, None) => return Err(CliError::validation("paths.synthetic_manifest or paths.manifest is required")),
    };
    let out = cfg.output_dir()?;
    let manifest = Manifest::load(manifest_path)?;
    let alphabet = &manifest.alphabet;
    let mut acc = AlignmentAccumulator::new(match_mode(cfg.metrics.class_agnostic));
    let mut records = 0;
    for (row, rec) in manifest.records.iter().enumerate() {
        if cfg.metrics.split.is_some_and(|s| s != rec.split) {
            continue;
        }
        let mask = read_mask(&manifest.resolve(&rec.mask), alphabet)?;
        validate_boxes(&rec.boxes, mask.nrows(), mask.ncols())
            .map_err(|e| CliError::Validation(format!("{} record {row}: {e}", manifest_path.display())))?;
        acc.add(mask.view(), &rec.boxes, alphabet);
        records += 1;
    }
    if records == 0 {
        return Err(CliError::validation(format!("no records to evaluate in {}", manifest_path.display())));
    }
    let report = acc.finish(alphabet);
    create_dir(out)?;
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;
    write_text(&out.join("report.txt"), &report.table())?;
    write_run_info(out, "evaluate", cfg, &[(key, manifest_path)])?;
    Ok(EvaluateOutcome {
        report,
        records,
        report_path,
    })
}
