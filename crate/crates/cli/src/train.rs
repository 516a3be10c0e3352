use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use boxforge_core::dataset::{load_sample, save_labeled, Manifest, Split};
use boxforge_core::diffusion::{pack_condition, pack_joint, NoiseSchedule, SampleOptions};
use boxforge_core::geometry::{compute_maps_fast, MapOptions};
use boxforge_core::seed::derive_seed;
use boxforge_core::{ClassAlphabet, LabeledSample};
use boxforge_nn::{Checkpoint, EpochLoss, Model, NnError, TrainExample, Trainer};

use crate::archive::{create_dir, write_run_info, write_text};
use crate::generate::{generate_layouts, Layout};
use crate::{CliError, RunConfig};

/// Seed stream for the initial weights.
const INIT_STREAM: u64 = 0x1417;
/// Seed stream for preview chains.
const PREVIEW_STREAM: u64 = 0x9e11;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: Vec<EpochLoss>,
    pub output_dir: PathBuf,
    pub image_size: [usize; 2],
}

/// Joint targets and conditioning stacks for a set of labeled samples.
pub fn training_examples(samples: &[LabeledSample], alphabet: &ClassAlphabet) -> Result<Vec<TrainExample>, CliError> {
    samples
        .iter()
        .map(|s| {
            let maps = compute_maps_fast(&s.boxes, s.height(), s.width(), MapOptions::default())
                .map_err(|e| CliError::Validation(e.to_string()))?;
            Ok(TrainExample {
                x0: pack_joint(s.image.view(), s.mask.view(), alphabet)?,
                cond: pack_condition(&maps, alphabet)?,
            })
        })
        .collect()
}

fn loss_csv(history: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,steps,mean_loss\n");
    for e in history {
        let _ = writeln!(s, "{},{},{}", e.epoch + 1, e.steps, e.mean_loss);
    }
    s
}

fn checkpoint_path(cfg: &RunConfig, out: &Path) -> PathBuf {
    cfg.paths.checkpoint.clone().unwrap_or_else(|| out.join("checkpoint.bin"))
}

/// Trains the joint denoiser on the `diffusion_train` split of
/// `paths.manifest`, resuming from `paths.resume` when given.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let manifest_path = RunConfig::require(&cfg.paths.manifest, "manifest")?;
    let out = cfg.output_dir()?.to_path_buf();
    let manifest = Manifest::load(manifest_path)?;
    let alphabet = manifest.alphabet.clone();
    let rows = manifest.indices_in(Split::DiffusionTrain);
    if rows.is_empty() {
        return Err(CliError::validation(format!("{} has no diffusion_train records", manifest_path.display())));
    }
    let samples = rows.iter().map(|&i| load_sample(&manifest, i)).collect::<Result<Vec<_>, _>>()?;
    let (h, w) = (samples[0].height(), samples[0].width());
    if let Some((k, s)) = samples.iter().enumerate().find(|(_, s)| (s.height(), s.width()) != (h, w)) {
        return Err(CliError::validation(format!(
            "training images must share one size: record {} is {}x{}, record {} is {h}x{w}",
            rows[k],
            s.height(),
            s.width(),
            rows[0]
        )));
    }
    let denoiser = cfg.diffusion.denoiser(alphabet.bit_width());
    let multiple = 1usize << denoiser.depth();
    if h % multiple != 0 || w % multiple != 0 {
        return Err(CliError::validation(format!(
            "image size {h}x{w} is not a multiple of {multiple} required by {} resolution levels",
            denoiser.depth() + 1
        )));
    }
    let data = training_examples(&samples, &alphabet)?;

    let mut trainer = match &cfg.paths.resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            if ckpt.alphabet != alphabet {
                return Err(CliError::validation(format!("{}: checkpoint classes differ from the manifest", p.display())));
            }
            if ckpt.denoiser != denoiser || ckpt.schedule != cfg.diffusion.schedule() {
                return Err(CliError::validation(format!(
                    "{}: checkpoint architecture or schedule differs from the config",
                    p.display()
                )));
            }
            let mut t = ckpt.into_trainer()?;
            t.config.epochs = cfg.diffusion.epochs;
            log::info!("resuming at epoch {} step {}", t.state.epoch, t.state.step);
            t
        }
        None => {
            let model = Model::new(&denoiser, derive_seed(cfg.diffusion.seed, INIT_STREAM))?;
            let schedule = NoiseSchedule::from_params(cfg.diffusion.schedule())?;
            Trainer::new(model, schedule, cfg.diffusion.train())?
        }
    };
    if cfg.diffusion.epochs == 0 {
        log::warn!("diffusion.epochs is 0; writing an untrained checkpoint");
    }
    log::info!(
        "training {} parameters on {} images of {h}x{w}, T = {}",
        trainer.model.params.num_scalars(),
        data.len(),
        trainer.schedule.num_steps()
    );

    create_dir(&out)?;
    let ckpt_path = checkpoint_path(cfg, &out);
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let preview_layouts: Vec<Layout> = samples
        .iter()
        .take(cfg.diffusion.preview_count)
        .enumerate()
        .map(|(k, s)| Layout {
            height: h,
            width: w,
            boxes: s.boxes.clone(),
            seed: derive_seed(cfg.diffusion.seed ^ PREVIEW_STREAM, k as u64),
        })
        .collect();
    let save = |trainer: &Trainer| -> Result<(), CliError> {
        let mut ckpt = Checkpoint::from_trainer(trainer, &alphabet);
        ckpt.image_size = Some([h, w]);
        ckpt.save(&ckpt_path)?;
        write_text(&out.join("loss_curve.csv"), &loss_csv(&trainer.state.history))
    };
    let preview = |trainer: &Trainer| -> Result<(), CliError> {
        let mut model = Model::new(trainer.model.config(), 0)?;
        model.params = trainer.sampling_params().clone();
        let dir = out.join("previews").join(format!("epoch_{:04}", trainer.state.epoch));
        create_dir(&dir)?;
        let gen = generate_layouts(
            &model,
            &trainer.schedule,
            &alphabet,
            &preview_layouts,
            SampleOptions::full(&trainer.schedule),
            false,
            preview_layouts.len().max(1),
            |_| {},
        )?;
        for (k, (image, mask)) in gen.into_iter().enumerate() {
            let s = LabeledSample {
                image,
                mask,
                boxes: preview_layouts[k].boxes.clone(),
            };
            save_labeled(&s, &dir, &format!("{k:02}"), &alphabet)?;
        }
        Ok(())
    };

    let mut failure: Option<CliError> = None;
    let every = cfg.diffusion.checkpoint_every;
    let preview_every = cfg.diffusion.preview_every;
    let result = trainer.fit(&data, |t| {
        let epoch = t.state.epoch;
        let r = (|| {
            if every > 0 && epoch % every == 0 {
                save(t)?;
            }
            if preview_every > 0 && epoch % preview_every == 0 && !preview_layouts.is_empty() {
                preview(t)?;
            }
            Ok(())
        })();
        r.map_err(|e: CliError| {
            let msg = e.to_string();
            failure = Some(e);
            NnError::Config(msg)
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Err(e) = result {
        // keep what was learned so far before reporting
        let _ = save(&trainer);
        return Err(e.into());
    }
    save(&trainer)?;
    let mut inputs = vec![("manifest", manifest_path)];
    if let Some(r) = &cfg.paths.resume {
        inputs.push(("resume", r.as_path()));
    }
    write_run_info(&out, "train", cfg, &inputs)?;
    Ok(TrainOutcome {
        checkpoint: ckpt_path,
        history: trainer.state.history.clone(),
        output_dir: out,
        image_size: [h, w],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_one_based() {
        let h = [EpochLoss {
            epoch: 0,
            steps: 4,
            mean_loss: 0.5,
        }];
        assert_eq!(loss_csv(&h), "epoch,steps,mean_loss\n1,4,0.5\n");
    }
}
