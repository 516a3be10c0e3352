use boxforge_core::diffusion::{condition_channels, decode_joint, joint_channels, pack_condition, sample, NoiseSchedule, SampleOptions};
use boxforge_core::geometry::{compute_maps_fast, MapOptions};
use boxforge_core::{BoundingBox, ClassAlphabet};
use boxforge_nn::{Checkpoint, JointPredictor, Model, NnError};
use ndarray::{Array2, Array3, Axis};

/// Produces one `(image, mask)` pair for a validated request. Called from
/// the single worker thread only.
pub trait SampleEngine: Send + Sync + 'static {
    fn alphabet(&self) -> &ClassAlphabet;
    /// Chain length of the loaded schedule.
    fn num_steps(&self) -> usize;
    /// Image sides must be multiples of this.
    fn size_multiple(&self) -> usize {
        1
    }
    /// Training resolution, when known.
    fn native_size(&self) -> Option<(usize, usize)> {
        None
    }
    fn describe(&self) -> serde_json::Value;
    #[allow(clippy::type_complexity)]
    fn generate(&self, height: usize, width: usize, boxes: &[BoundingBox], seed: u64) -> Result<(Array3<u8>, Array2<u8>), String>;
}

/// Ancestral sampling with a trained checkpoint.
pub struct DiffusionEngine {
    model: Model<f32>,
    schedule: NoiseSchedule,
    alphabet: ClassAlphabet,
    image_size: Option<[usize; 2]>,
    name: String,
    epochs: usize,
}

impl DiffusionEngine {
    pub fn from_checkpoint(ckpt: &Checkpoint, name: impl Into<String>) -> Result<Self, NnError> {
        ckpt.denoiser.check_joint(ckpt.alphabet.bit_width())?;
        Ok(Self {
            model: ckpt.sampling_model()?,
            schedule: NoiseSchedule::from_params(ckpt.schedule)?,
            alphabet: ckpt.alphabet.clone(),
            image_size: ckpt.image_size,
            name: name.into(),
            epochs: ckpt.state.epoch,
        })
    }
}

impl SampleEngine for DiffusionEngine {
    fn alphabet(&self) -> &ClassAlphabet {
        &self.alphabet
    }

    fn num_steps(&self) -> usize {
        self.schedule.num_steps()
    }

    fn size_multiple(&self) -> usize {
        1 << self.model.config().depth()
    }

    fn native_size(&self) -> Option<(usize, usize)> {
        self.image_size.map(|[h, w]| (h, w))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "denoiser": self.model.config(),
            "schedule": self.schedule.params(),
            "parameters": self.model.params.num_scalars(),
            "epochs_trained": self.epochs,
            "image_size": self.image_size,
        })
    }

    fn generate(&self, height: usize, width: usize, boxes: &[BoundingBox], seed: u64) -> Result<(Array3<u8>, Array2<u8>), String> {
        let b = self.alphabet.bit_width();
        let maps = compute_maps_fast(boxes, height, width, MapOptions::default()).map_err(|e| e.to_string())?;
        let cond = pack_condition(&maps, &self.alphabet).map_err(|e| e.to_string())?.insert_axis(Axis(0));
        debug_assert_eq!(cond.dim().1, condition_channels(b));
        let predictor = JointPredictor {
            model: &self.model,
            max_batch: 1,
        };
        let x = sample(
            &predictor,
            cond.view(),
            joint_channels(b),
            &self.schedule,
            &[seed],
            SampleOptions::full(&self.schedule),
        )
        .map_err(|e| e.to_string())?;
        decode_joint(x.index_axis(Axis(0), 0), &self.alphabet).map_err(|e| e.to_string())
    }
}
