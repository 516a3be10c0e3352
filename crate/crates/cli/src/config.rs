//! Run configuration: one JSON file, every field defaulted, overridable
//! from the command line with dotted `key=value` pairs.

use std::path::{Path, PathBuf};

use boxforge_core::dataset::{Split, ToySpec};
use boxforge_core::diffusion::ScheduleParams;
use boxforge_nn::segmenter::SegmenterConfig;
use boxforge_nn::{AdamWConfig, DenoiserConfig, LrSchedule, TrainConfig};
use boxforge_service::ServiceConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub diffusion: DiffusionConfig,
    pub sampling: SamplingConfig,
    pub metrics: MetricsConfig,
    pub downstream: DownstreamConfig,
    pub toy: ToyConfig,
    pub service: ServiceConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Real (or annotation) manifest.
    pub manifest: Option<PathBuf>,
    /// Manifest written by `sample`.
    pub synthetic_manifest: Option<PathBuf>,
    /// Checkpoint to write (`train`) or read (`sample`, `serve`).
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint to continue training from.
    pub resume: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub num_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub base_width: usize,
    pub channel_mult: Vec<usize>,
    pub time_embed_dim: usize,
    pub norm_groups: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub warmup_steps: u64,
    pub lr_schedule: LrSchedule,
    pub grad_clip: Option<f64>,
    pub ema_decay: Option<f64>,
    pub cond_dropout: f64,
    /// Save a resumable checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
    /// Write preview samples every this many epochs (0 = never).
    pub preview_every: usize,
    pub preview_count: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        let s = ScheduleParams::default();
        Self {
            num_steps: s.num_steps,
            beta_start: s.beta_start,
            beta_end: s.beta_end,
            base_width: 32,
            channel_mult: vec![1, 2, 2],
            time_embed_dim: 64,
            norm_groups: 8,
            lr: 1e-5,
            weight_decay: 0.01,
            batch_size: 8,
            epochs: 300,
            seed: 0,
            warmup_steps: 0,
            lr_schedule: LrSchedule::Constant,
            grad_clip: None,
            ema_decay: None,
            cond_dropout: 0.0,
            checkpoint_every: 10,
            preview_every: 0,
            preview_count: 4,
        }
    }
}

impl DiffusionConfig {
    pub fn schedule(&self) -> ScheduleParams {
        ScheduleParams {
            num_steps: self.num_steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
        }
    }

    pub fn denoiser(&self, bit_width: usize) -> DenoiserConfig {
        DenoiserConfig {
            norm_groups: self.norm_groups,
            ..DenoiserConfig::joint(bit_width, self.base_width, self.channel_mult.clone(), self.time_embed_dim)
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: AdamWConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamWConfig::default()
            },
            seed: self.seed,
            warmup_steps: self.warmup_steps,
            lr_schedule: self.lr_schedule,
            grad_clip: self.grad_clip,
            ema_decay: self.ema_decay,
            cond_dropout: self.cond_dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Chain length; must equal the checkpoint's T when given.
    pub steps: Option<usize>,
    pub samples_per_annotation: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub clip_x0: bool,
    /// Zero the conditioning channels (unconditioned ablation).
    pub zero_condition: bool,
    /// Only annotate rows of this split.
    pub split: Option<Split>,
    /// Only the first rows (after the split filter).
    pub limit: Option<usize>,
    /// Output size; defaults to the training resolution in the checkpoint.
    pub height: Option<usize>,
    pub width: Option<usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            steps: None,
            samples_per_annotation: 1,
            seed: 0,
            batch_size: 16,
            clip_x0: true,
            zero_condition: false,
            split: None,
            limit: None,
            height: None,
            width: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Count a defect pixel as inside when any box holds it.
    pub class_agnostic: bool,
    /// Only evaluate records of this split.
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownstreamConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub base_width: usize,
    pub channel_mult: Vec<usize>,
    pub per_class: bool,
    pub class_weighting: bool,
    pub flips: bool,
    /// Synthetic records used for training; `null` takes all of them.
    pub synthetic_split: Option<Split>,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        let s = SegmenterConfig::default();
        Self {
            epochs: s.epochs,
            lr: s.optimizer.lr,
            weight_decay: s.optimizer.weight_decay,
            batch_size: s.batch_size,
            seed: 0,
            base_width: s.base_width,
            channel_mult: s.channel_mult,
            per_class: s.per_class,
            class_weighting: s.class_weighting,
            flips: s.flips,
            synthetic_split: Some(Split::SegTrain),
        }
    }
}

impl DownstreamConfig {
    pub fn segmenter(&self) -> SegmenterConfig {
        let d = SegmenterConfig::default();
        SegmenterConfig {
            base_width: self.base_width,
            channel_mult: self.channel_mult.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: AdamWConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..d.optimizer
            },
            seed: self.seed,
            per_class: self.per_class,
            class_weighting: self.class_weighting,
            flips: self.flips,
            ..d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub spec: ToySpec,
    pub count: usize,
    pub fractions: [f64; 3],
    pub split_seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            spec: ToySpec::default(),
            count: 100,
            fractions: [0.7, 0.2, 0.1],
            split_seed: 0,
        }
    }
}

/// Applies `a.b.c=value` to a JSON tree; the value is parsed as JSON and
/// falls back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::validation(format!("override key `{key}` is malformed")));
    }
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::validation(format!("override `{key}`: `{p}` is not inside an object")))?;
        node = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::validation(format!("override `{key}` does not address an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_value(v: Value) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| CliError::validation(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any) and applies the overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut v = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::validation(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::validation(format!("config {} is not valid JSON: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let d = &self.diffusion;
        if d.batch_size == 0 {
            return bad("diffusion.batch_size must be positive".into());
        }
        self.diffusion.denoiser(1).validate()?;
        self.diffusion.train().validate()?;
        boxforge_core::diffusion::NoiseSchedule::from_params(d.schedule()).map_err(|e| CliError::Validation(format!("diffusion: {e}")))?;
        let s = &self.sampling;
        if s.samples_per_annotation == 0 || s.batch_size == 0 {
            return bad("sampling.samples_per_annotation and sampling.batch_size must be positive".into());
        }
        if let Some(steps) = s.steps {
            if steps != d.num_steps && self.paths.resume.is_none() && self.paths.checkpoint.is_none() {
                return bad(format!("sampling.steps ({steps}) must equal diffusion.num_steps ({})", d.num_steps));
            }
        }
        let ds = &self.downstream;
        if ds.batch_size == 0 || !(ds.lr > 0.0) {
            return bad("downstream.batch_size and downstream.lr must be positive".into());
        }
        if self.toy.count == 0 {
            return bad("toy.count must be at least 1".into());
        }
        Ok(())
    }

    pub fn output_dir(&self) -> Result<&Path, CliError> {
        self.paths
            .output_dir
            .as_deref()
            .ok_or_else(|| CliError::validation("paths.output_dir is required"))
    }

    pub fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
        p.as_deref().ok_or_else(|| CliError::validation(format!("paths.{key} is required")))
    }
}
