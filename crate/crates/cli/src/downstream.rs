use std::fmt::Write as _;

use boxforge_core::dataset::{load_sample, Manifest, Split};
use boxforge_core::metrics::{clip_labels_to_boxes, F1Report};
use boxforge_core::LabeledSample;
use boxforge_nn::train_segmenter;
use serde::Serialize;

use crate::archive::{create_dir, write_json, write_run_info, write_text};
use crate::{CliError, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct RegimeResult {
    pub name: String,
    pub train_samples: usize,
    pub report: F1Report,
}

#[derive(Debug, Clone, Serialize)]
pub struct DownstreamOutcome {
    pub test_samples: usize,
    pub regimes: Vec<RegimeResult>,
}

impl DownstreamOutcome {
    pub fn regime(&self, name: &str) -> Option<&RegimeResult> {
        self.regimes.iter().find(|r| r.name == name)
    }

    pub fn table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        let mut s = format!("{:<12} | {:>7}", "regime", "train");
        if let Some(first) = self.regimes.first() {
            for c in &first.report.per_class {
                let _ = write!(s, " | {:>10}", c.name);
            }
        }
        let _ = writeln!(s, " | {:>10}", "macro F1");
        for r in &self.regimes {
            let _ = write!(s, "{:<12} | {:>7}", r.name, r.train_samples);
            for c in &r.report.per_class {
                let _ = write!(s, " | {:>10}", pct(c.f1));
            }
            let _ = writeln!(s, " | {:>10}", pct(r.report.macro_f1));
        }
        s
    }
}

/// Trains one segmenter per regime (real `seg_train` data, synthetic data
/// with labels clipped to their boxes, and both) and scores each on the
/// real `test` split.
pub fn downstream(cfg: &RunConfig) -> Result<DownstreamOutcome, CliError> {
    let real_path = RunConfig::require(&cfg.paths.manifest, "manifest")?;
    let synth_path = RunConfig::require(&cfg.paths.synthetic_manifest, "synthetic_manifest")?;
    let out = cfg.output_dir()?;
    let real = Manifest::load(real_path)?;
    let synth = Manifest::load(synth_path)?;
    if synth.alphabet.num_classes() != real.alphabet.num_classes() {
        return Err(CliError::validation(format!(
            "{} has {} classes but {} has {}",
            synth_path.display(),
            synth.alphabet.num_classes(),
            real_path.display(),
            real.alphabet.num_classes()
        )));
    }
    let alphabet = &real.alphabet;
    let load = |m: &Manifest, rows: Vec<usize>| rows.into_iter().map(|i| load_sample(m, i)).collect::<Result<Vec<_>, _>>();
    let real_train = load(&real, real.indices_in(Split::SegTrain))?;
    let test = load(&real, real.indices_in(Split::Test))?;
    let synth_rows: Vec<usize> = (0..synth.records.len())
        .filter(|&i| cfg.downstream.synthetic_split.map_or(true, |s| synth.records[i].split == s))
        .collect();
    let synth_train: Vec<LabeledSample> = load(&synth, synth_rows)?
        .into_iter()
        .map(|s| LabeledSample {
            mask: clip_labels_to_boxes(s.mask.view(), &s.boxes, alphabet),
            ..s
        })
        .collect();
    for (what, set, path) in [("seg_train", &real_train, real_path), ("test", &test, real_path), ("synthetic", &synth_train, synth_path)] {
        if set.is_empty() {
            return Err(CliError::validation(format!("{} provides no {what} samples", path.display())));
        }
    }
    let both: Vec<LabeledSample> = real_train.iter().chain(&synth_train).cloned().collect();
    let seg_cfg = cfg.downstream.segmenter();
    let mut regimes = Vec::new();
    for (name, set) in [("Real", &real_train), ("Synth", &synth_train), ("Real+Synth", &both)] {
        log::info!("training segmenter on {name} ({} samples)", set.len());
        let model = train_segmenter(set, alphabet, &seg_cfg)?;
        let report = model.evaluate(&test);
        log::info!("{name}: macro F1 {:?}", report.macro_f1);
        regimes.push(RegimeResult {
            name: name.to_string(),
            train_samples: set.len(),
            report,
        });
    }
    let outcome = DownstreamOutcome {
        test_samples: test.len(),
        regimes,
    };
    create_dir(out)?;
    write_json(&out.join("downstream.json"), &outcome)?;
    write_text(&out.join("downstream.txt"), &outcome.table())?;
    write_run_info(out, "downstream", cfg, &[("manifest", real_path), ("synthetic_manifest", synth_path)])?;
    Ok(outcome)
}
