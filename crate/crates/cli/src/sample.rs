use std::path::PathBuf;

use boxforge_core::dataset::{save_generated, Manifest, ManifestRecord};
use boxforge_core::diffusion::{NoiseSchedule, SampleOptions};
use boxforge_core::metrics::{AlignmentAccumulator, AlignmentReport, MatchMode};
use boxforge_core::seed::derive_seed;
use boxforge_core::{GeneratedSample, Provenance, SampleMetrics};
use boxforge_nn::Checkpoint;

use crate::archive::{create_dir, write_json, write_run_info, write_text};
use crate::generate::{generate_layouts, Layout};
use crate::{CliError, RunConfig};

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub manifest: PathBuf,
    pub report: AlignmentReport,
    pub samples: usize,
}

pub(crate) fn match_mode(class_agnostic: bool) -> MatchMode {
    if class_agnostic {
        MatchMode::ClassAgnostic
    } else {
        MatchMode::SameClass
    }
}

/// Synthesizes `samples_per_annotation` image/mask pairs for each selected
/// row of `paths.manifest` (only its boxes are used) with the checkpoint at
/// `paths.checkpoint`, and writes a synthetic manifest plus an alignment
/// report into `paths.output_dir`.
pub fn sample(cfg: &RunConfig) -> Result<SampleOutcome, CliError> {
    let s = &cfg.sampling;
    let ckpt_path = RunConfig::require(&cfg.paths.checkpoint, "checkpoint")?;
    let manifest_path = RunConfig::require(&cfg.paths.manifest, "manifest")?;
    let out = cfg.output_dir()?.to_path_buf();
    let ckpt = Checkpoint::load(ckpt_path)?;
    let annotations = Manifest::load(manifest_path)?;
    let alphabet = ckpt.alphabet.clone();
    if annotations.alphabet.num_classes() != alphabet.num_classes() {
        return Err(CliError::validation(format!(
            "checkpoint was trained with {} classes but {} declares {}",
            alphabet.num_classes(),
            manifest_path.display(),
            annotations.alphabet.num_classes()
        )));
    }
    if annotations.alphabet != alphabet {
        log::warn!("class names differ between checkpoint and manifest; using the checkpoint's");
    }
    ckpt.denoiser.check_joint(alphabet.bit_width())?;
    let schedule = NoiseSchedule::from_params(ckpt.schedule)?;
    let steps = s.steps.unwrap_or(schedule.num_steps());
    if steps != schedule.num_steps() {
        return Err(CliError::validation(format!(
            "sampling.steps is {steps} but the checkpoint schedule has T = {}; only full-length chains are supported",
            schedule.num_steps()
        )));
    }
    let (h, w) = match (s.height, s.width, ckpt.image_size) {
        (Some(h), Some(w), _) => (h, w),
        (None, None, Some([h, w])) => (h, w),
        (None, None, None) => return Err(CliError::validation("checkpoint has no image size; set sampling.height and sampling.width")),
        _ => return Err(CliError::validation("set both sampling.height and sampling.width or neither")),
    };
    let multiple = 1usize << ckpt.denoiser.depth();
    if h == 0 || w == 0 || h % multiple != 0 || w % multiple != 0 {
        return Err(CliError::validation(format!("output size {h}x{w} must be a positive multiple of {multiple}")));
    }

    let mut rows: Vec<usize> = (0..annotations.records.len())
        .filter(|&i| s.split.map_or(true, |sp| annotations.records[i].split == sp))
        .collect();
    if let Some(limit) = s.limit {
        rows.truncate(limit);
    }
    if rows.is_empty() {
        return Err(CliError::validation(format!("no annotation rows selected from {}", manifest_path.display())));
    }
    let k_per = s.samples_per_annotation as u64;
    let mut layouts = Vec::new();
    let mut meta = Vec::new();
    for &row in &rows {
        let rec = &annotations.records[row];
        for (index, b) in rec.boxes.iter().enumerate() {
            b.validate(index, h, w)
                .map_err(|e| CliError::Validation(format!("{} record {row}: {e}", manifest_path.display())))?;
        }
        for k in 0..k_per {
            layouts.push(Layout {
                height: h,
                width: w,
                boxes: rec.boxes.clone(),
                seed: derive_seed(s.seed, row as u64 * k_per + k),
            });
            meta.push((row, k));
        }
    }

    let model = ckpt.sampling_model()?;
    let opts = SampleOptions {
        steps,
        clip_x0: s.clip_x0,
    };
    let total = layouts.len();
    log::info!("sampling {total} images of {h}x{w} with T = {steps}");
    let generated = generate_layouts(&model, &schedule, &alphabet, &layouts, opts, s.zero_condition, s.batch_size, |done| {
        log::info!("sampled {done}/{total}")
    })?;

    let sample_dir = out.join("samples");
    create_dir(&sample_dir)?;
    let ckpt_name = ckpt_path.file_name().map(|n| n.to_string_lossy().into_owned());
    let mode = match_mode(cfg.metrics.class_agnostic);
    let mut acc = AlignmentAccumulator::new(mode);
    let mut synthetic = Manifest::new(&out, alphabet.clone());
    for ((layout, (row, k)), (image, mask)) in layouts.iter().zip(&meta).zip(generated) {
        let rec = &annotations.records[*row];
        let one = AlignmentReport::for_mask(mask.view(), &layout.boxes, &alphabet, mode);
        acc.add(mask.view(), &layout.boxes, &alphabet);
        let g = GeneratedSample {
            image,
            mask,
            boxes: layout.boxes.clone(),
            provenance: Provenance {
                seed: layout.seed,
                steps,
                checkpoint: ckpt_name.clone(),
                source: Some(rec.image.clone()),
            },
            metrics: SampleMetrics {
                sae: one.sae_micro,
                ebr: one.ebr_average,
            },
        };
        let stem = format!("{row:05}_{k}");
        save_generated(&g, &sample_dir, &stem, &alphabet)?;
        synthetic.records.push(ManifestRecord {
            image: format!("samples/{stem}.png"),
            mask: format!("samples/{stem}_mask.png"),
            boxes: g.boxes,
            split: rec.split,
        });
    }
    let manifest_out = out.join("manifest.jsonl");
    synthetic.save(&manifest_out)?;
    let report = acc.finish(&alphabet);
    write_json(&out.join("alignment.json"), &report)?;
    write_text(&out.join("alignment.txt"), &report.table())?;
    write_run_info(&out, "sample", cfg, &[("checkpoint", ckpt_path), ("manifest", manifest_path)])?;
    log::info!("micro SAE {:?} %, average EBR {:?} %", report.sae_micro, report.ebr_average);
    Ok(SampleOutcome {
        manifest: manifest_out,
        report,
        samples: total,
    })
}
