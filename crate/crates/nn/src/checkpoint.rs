//! Checkpoint container:
//!
//! ```text
//! "BOXFORGE-CKPT-v1\n" | header length (u64 LE) | JSON header | f32 LE payload
//! ```
//!
//! The header lists every tensor (group, name, shape) in payload order.

use std::fs;
use std::path::Path;

use boxforge_core::diffusion::{NoiseSchedule, ScheduleParams};
use boxforge_core::ClassAlphabet;
use serde::{Deserialize, Serialize};

use crate::{AdamW, DenoiserConfig, Model, NnError, ParamStore, Tensor, TrainConfig, TrainState, Trainer};

pub const CHECKPOINT_MAGIC: &[u8] = b"BOXFORGE-CKPT-v1\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    denoiser: DenoiserConfig,
    schedule: ScheduleParams,
    alphabet: ClassAlphabet,
    train: TrainConfig,
    state: TrainState,
    adam_step: Option<u64>,
    #[serde(default)]
    image_size: Option<[usize; 2]>,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to sample from or resume a training run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleParams,
    pub alphabet: ClassAlphabet,
    pub train: TrainConfig,
    pub state: TrainState,
    pub params: ParamStore<f32>,
    pub optim: Option<AdamW<f32>>,
    pub ema: Option<ParamStore<f32>>,
    /// `[height, width]` of the training images.
    pub image_size: Option<[usize; 2]>,
}

fn err(path: &Path, message: impl Into<String>) -> NnError {
    NnError::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, alphabet: &ClassAlphabet) -> Self {
        Self {
            denoiser: trainer.model.config().clone(),
            schedule: trainer.schedule.params(),
            alphabet: alphabet.clone(),
            train: trainer.config.clone(),
            state: trainer.state.clone(),
            params: trainer.model.params.clone(),
            optim: Some(trainer.optim.clone()),
            ema: trainer.ema.clone(),
            image_size: None,
        }
    }

    /// Resumes training exactly where the checkpoint left off.
    pub fn into_trainer(self) -> Result<Trainer, NnError> {
        let schedule = NoiseSchedule::from_params(self.schedule)?;
        let mut model = Model::new(&self.denoiser, 0)?;
        model.params = self.params;
        let mut trainer = Trainer::new(model, schedule, self.train)?;
        if let Some(o) = self.optim {
            trainer.optim = o;
        }
        if trainer.ema.is_some() {
            trainer.ema = self.ema.or_else(|| Some(trainer.model.params.clone()));
        }
        trainer.state = self.state;
        Ok(trainer)
    }

    /// The model used for generation (moving-average weights when present).
    pub fn sampling_model(&self) -> Result<Model<f32>, NnError> {
        let mut model = Model::new(&self.denoiser, 0)?;
        model.params = self.ema.clone().unwrap_or_else(|| self.params.clone());
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut payload: Vec<&Tensor<f32>> = Vec::new();
        let add_store = |group: &str, s: &'_ ParamStore<f32>, tensors: &mut Vec<TensorEntry>| {
            for (name, t) in s.iter() {
                tensors.push(TensorEntry {
                    group: group.into(),
                    name: name.into(),
                    shape: t.shape().to_vec(),
                });
            }
        };
        add_store("params", &self.params, &mut tensors);
        payload.extend(self.params.iter().map(|(_, t)| t));
        if let Some(o) = &self.optim {
            for (group, ts) in [("adam_m", &o.m), ("adam_v", &o.v)] {
                for (id, t) in self.params.ids().zip(ts.iter()) {
                    tensors.push(TensorEntry {
                        group: group.into(),
                        name: self.params.name(id).into(),
                        shape: t.shape().to_vec(),
                    });
                    payload.push(t);
                }
            }
        }
        if let Some(e) = &self.ema {
            add_store("ema", e, &mut tensors);
            payload.extend(e.iter().map(|(_, t)| t));
        }
        let header = Header {
            denoiser: self.denoiser.clone(),
            schedule: self.schedule,
            alphabet: self.alphabet.clone(),
            train: self.train.clone(),
            state: self.state.clone(),
            adam_step: self.optim.as_ref().map(|o| o.step),
            image_size: self.image_size,
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 8 + json.len() + 4 * payload.iter().map(|t| t.len()).sum::<usize>());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in payload {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, NnError> {
        let rest = bytes
            .strip_prefix(CHECKPOINT_MAGIC)
            .ok_or_else(|| err(path, "not a boxforge checkpoint (bad magic)"))?;
        if rest.len() < 8 {
            return Err(err(path, "truncated header length"));
        }
        let hlen = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let rest = &rest[8..];
        if rest.len() < hlen {
            return Err(err(path, "truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..hlen]).map_err(|e| err(path, format!("bad header: {e}")))?;
        let mut payload = &rest[hlen..];
        header.denoiser.validate()?;
        let template = Model::<f32>::new(&header.denoiser, 0)?.params;

        let mut groups: Vec<(String, ParamStore<f32>)> = Vec::new();
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            if payload.len() < 4 * n {
                return Err(err(path, format!("payload truncated at {}:{}", e.group, e.name)));
            }
            let data = payload[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            payload = &payload[4 * n..];
            let id = template
                .id_of(&e.name)
                .ok_or_else(|| err(path, format!("unknown tensor {}", e.name)))?;
            if template.get(id).shape() != e.shape.as_slice() {
                return Err(err(
                    path,
                    format!("tensor {} has shape {:?}, architecture needs {:?}", e.name, e.shape, template.get(id).shape()),
                ));
            }
            let store = match groups.iter_mut().find(|(g, _)| *g == e.group) {
                Some((_, s)) => s,
                None => {
                    groups.push((e.group.clone(), template.clone()));
                    &mut groups.last_mut().expect("just pushed").1
                }
            };
            *store.get_mut(id) = Tensor::from_vec(&e.shape, data);
        }
        if !payload.is_empty() {
            return Err(err(path, format!("{} trailing payload bytes", payload.len())));
        }
        let mut take = |g: &str| -> Result<Option<ParamStore<f32>>, NnError> {
            let Some(pos) = groups.iter().position(|(name, _)| name == g) else {
                return Ok(None);
            };
            let n = header.tensors.iter().filter(|e| e.group == g).count();
            if n != template.len() {
                return Err(err(path, format!("group {g} has {n} of {} tensors", template.len())));
            }
            Ok(Some(groups.swap_remove(pos).1))
        };
        let params = take("params")?.ok_or_else(|| err(path, "no parameters"))?;
        let m = take("adam_m")?;
        let v = take("adam_v")?;
        let ema = take("ema")?;
        let optim = match (m, v, header.adam_step) {
            (Some(m), Some(v), Some(step)) => Some(AdamW {
                config: header.train.optimizer,
                step,
                m: m.iter().map(|(_, t)| t.clone()).collect(),
                v: v.iter().map(|(_, t)| t.clone()).collect(),
            }),
            (None, None, _) => None,
            _ => return Err(err(path, "incomplete optimizer state")),
        };
        Ok(Self {
            denoiser: header.denoiser,
            schedule: header.schedule,
            alphabet: header.alphabet,
            train: header.train,
            state: header.state,
            params,
            optim,
            ema,
            image_size: header.image_size,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        fs::write(path, self.to_bytes()).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let bytes = fs::read(path).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, path)
    }
}
