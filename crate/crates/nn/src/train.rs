use boxforge_core::diffusion::NoiseSchedule;
use boxforge_core::seed::derive_seed;
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{training_loss, AdamW, AdamWConfig, Graph, Model, NnError, NoisedBatch, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    /// Linear learning-rate ramp over the first steps.
    #[serde(default)]
    pub warmup_steps: u64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Exponential moving average of the weights, used for sampling.
    #[serde(default)]
    pub ema_decay: Option<f64>,
    /// Probability of zeroing an item's conditioning during training.
    #[serde(default)]
    pub cond_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 8,
            optimizer: AdamWConfig::default(),
            seed: 0,
            warmup_steps: 0,
            lr_schedule: LrSchedule::Constant,
            grad_clip: None,
            ema_decay: None,
            cond_dropout: 0.0,
        }
    }
}

/// Learning rate after warmup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from the base rate down to zero at the last step of the
    /// last epoch.
    Cosine,
}

impl TrainConfig {
    /// Learning rate for optimizer step `step` (0-based) of a run with
    /// `steps_per_epoch` steps per epoch.
    pub fn learning_rate(&self, step: u64, steps_per_epoch: u64) -> f64 {
        let base = self.optimizer.lr;
        let warm = self.warmup_steps;
        if step < warm {
            return base * (step + 1) as f64 / warm as f64;
        }
        match self.lr_schedule {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let total = (self.epochs as u64 * steps_per_epoch).max(warm + 1);
                let progress = ((step - warm) as f64 / (total - warm) as f64).min(1.0);
                0.5 * base * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.cond_dropout) {
            return bad("cond_dropout must lie in [0, 1)");
        }
        if let Some(d) = self.ema_decay {
            if !(0.0..1.0).contains(&d) {
                return bad("ema_decay must lie in [0, 1)");
            }
        }
        if matches!(self.grad_clip, Some(c) if c <= 0.0) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

/// A clean joint state `(3 + b, H, W)` with its conditioning `(1 + b, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub x0: Array3<f32>,
    pub cond: Array3<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub steps: u64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub history: Vec<EpochLoss>,
}

/// Owns everything needed to continue training bit-exactly: the epoch
/// generator is derived from `(seed, epoch)` only.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model<f32>,
    pub optim: AdamW<f32>,
    pub ema: Option<ParamStore<f32>>,
    pub schedule: NoiseSchedule,
    pub config: TrainConfig,
    pub state: TrainState,
}

fn stack(items: impl Iterator<Item = Array3<f32>>, n: usize) -> Tensor<f32> {
    let mut data = Vec::new();
    let mut dims = (0, 0, 0);
    for a in items {
        dims = a.dim();
        data.extend(a.iter());
    }
    Tensor::from_vec(&[n, dims.0, dims.1, dims.2], data)
}

impl Trainer {
    pub fn new(model: Model<f32>, schedule: NoiseSchedule, config: TrainConfig) -> Result<Self, NnError> {
        config.validate()?;
        let optim = AdamW::new(config.optimizer, &model.params);
        let ema = config.ema_decay.map(|_| model.params.clone());
        Ok(Self {
            model,
            optim,
            ema,
            schedule,
            config,
            state: TrainState::default(),
        })
    }

    /// The weights to sample with: the moving average when kept.
    pub fn sampling_params(&self) -> &ParamStore<f32> {
        self.ema.as_ref().unwrap_or(&self.model.params)
    }

    fn check_data(&self, data: &[TrainExample]) -> Result<(), NnError> {
        let first = data.first().ok_or_else(|| NnError::EmptyDataset("no training examples".into()))?;
        let cfg = self.model.config();
        let (cx, h, w) = first.x0.dim();
        let cc = first.cond.dim().0;
        if cx != cfg.out_channels || cx + cc != cfg.in_channels {
            return Err(NnError::Shape(format!(
                "examples have {cx} + {cc} channels, denoiser expects {} + {}",
                cfg.out_channels,
                cfg.in_channels - cfg.out_channels
            )));
        }
        if let Some((i, _)) = data.iter().enumerate().find(|(_, e)| e.x0.dim() != (cx, h, w) || e.cond.dim() != (cc, h, w)) {
            return Err(NnError::Shape(format!("example {i} differs in shape from example 0")));
        }
        Ok(())
    }

    /// Runs one epoch and returns its mean loss.
    pub fn train_epoch(&mut self, data: &[TrainExample]) -> Result<f64, NnError> {
        self.check_data(data)?;
        let epoch = self.state.epoch;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, epoch as u64));
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let t_max = self.schedule.num_steps();
        let steps_per_epoch = data.len().div_ceil(self.config.batch_size) as u64;
        let (mut sum, mut count) = (0.0, 0u64);
        for chunk in order.chunks(self.config.batch_size) {
            let n = chunk.len();
            let steps: Vec<usize> = (0..n).map(|_| rng.random_range(1..=t_max)).collect();
            let x0 = stack(chunk.iter().map(|&i| data[i].x0.clone()), n);
            let noise = Tensor::from_vec(x0.shape(), (0..x0.len()).map(|_| rng.sample::<f32, _>(StandardNormal)).collect());
            let cond = stack(
                chunk.iter().map(|&i| {
                    if self.config.cond_dropout > 0.0 && rng.random::<f64>() < self.config.cond_dropout {
                        Array3::zeros(data[i].cond.dim())
                    } else {
                        data[i].cond.clone()
                    }
                }),
                n,
            );
            let batch = NoisedBatch { x0, cond, steps, noise };
            let (loss, mut grads) = {
                let mut g = Graph::new(&self.model.params, true);
                let l = training_loss(&mut g, &self.model.net, &batch, &self.schedule)?;
                (g.value(l).item() as f64, g.backward(l))
            };
            if !loss.is_finite() {
                return Err(NnError::NonFinite {
                    epoch,
                    step: self.state.step,
                    loss,
                });
            }
            if let Some(clip) = self.config.grad_clip {
                let norm = grads.global_norm();
                if norm > clip {
                    grads.scale((clip / norm) as f32);
                }
            }
            let lr = self.config.learning_rate(self.state.step, steps_per_epoch);
            self.optim.update(&mut self.model.params, &grads, lr);
            if let (Some(ema), Some(d)) = (self.ema.as_mut(), self.config.ema_decay) {
                let d = d as f32;
                for id in self.model.params.ids() {
                    let src = self.model.params.get(id).data();
                    for (e, &p) in ema.get_mut(id).data_mut().iter_mut().zip(src) {
                        *e = d * *e + (1.0 - d) * p;
                    }
                }
            }
            self.state.step += 1;
            sum += loss;
            count += 1;
        }
        let mean = sum / count as f64;
        self.state.history.push(EpochLoss {
            epoch,
            steps: self.state.step,
            mean_loss: mean,
        });
        self.state.epoch += 1;
        Ok(mean)
    }

    /// Trains until `config.epochs` epochs are complete, calling
    /// `on_epoch` after each one.
    pub fn fit(&mut self, data: &[TrainExample], mut on_epoch: impl FnMut(&Trainer) -> Result<(), NnError>) -> Result<(), NnError> {
        while self.state.epoch < self.config.epochs {
            let loss = self.train_epoch(data)?;
            log::info!("epoch {} loss {loss:.5}", self.state.epoch);
            on_epoch(self)?;
        }
        Ok(())
    }
}
