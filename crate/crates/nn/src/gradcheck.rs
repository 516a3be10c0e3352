//! Finite-difference verification of the training-loss gradients.

use boxforge_core::diffusion::NoiseSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{training_loss, DenoiserConfig, Graph, Model, NnError, NoisedBatch, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub num_params: usize,
    /// `max |a - n| / max(|a|, |n|)` over scalars with a gradient above `floor`.
    pub max_rel_error: f64,
    /// `|a - n|_2 / |n|_2` over all scalars.
    pub norm_rel_error: f64,
    pub checked: usize,
}

/// A UNet of a few hundred parameters for a 1-bit alphabet.
pub fn tiny_denoiser() -> DenoiserConfig {
    DenoiserConfig {
        norm_groups: 1,
        ..DenoiserConfig::joint(1, 2, vec![1, 1], 4)
    }
}

/// Compares analytic and central-difference gradients of the training loss
/// for every parameter of `config`, in `f64`. All weights (including the
/// zero-initialized ones) are re-drawn so every path carries gradient.
pub fn check_training_loss(config: &DenoiserConfig, size: usize, seed: u64) -> Result<GradCheckReport, NnError> {
    let mut model = Model::<f64>::new(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in model.params.ids() {
        model.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.6..0.6));
    }
    let schedule = NoiseSchedule::linear(50, 1e-3, 0.2)?;
    let n = 2;
    let cx = config.out_channels;
    let cc = config.in_channels - cx;
    let mut draw = |shape: &[usize]| Tensor::from_vec(shape, (0..shape.iter().product()).map(|_| rng.sample(StandardNormal)).collect());
    let batch = NoisedBatch {
        x0: draw(&[n, cx, size, size]),
        cond: draw(&[n, cc, size, size]),
        noise: draw(&[n, cx, size, size]),
        steps: vec![7, 41],
    };
    let loss_at = |params: &ParamStore<f64>| -> Result<f64, NnError> {
        let mut g = Graph::new(params, true);
        let l = training_loss(&mut g, &model.net, &batch, &schedule)?;
        Ok(g.value(l).item())
    };
    let grads = {
        let mut g = Graph::new(&model.params, true);
        let l = training_loss(&mut g, &model.net, &batch, &schedule)?;
        g.backward(l)
    };
    let h = 1e-4;
    let floor = 1e-7;
    let (mut max_rel, mut diff2, mut num2, mut checked) = (0f64, 0f64, 0f64, 0);
    let mut probe = model.params.clone();
    for id in model.params.ids() {
        for k in 0..model.params.get(id).len() {
            let orig = probe.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let up = loss_at(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - h;
            let down = loss_at(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;
            let num = (up - down) / (2.0 * h);
            let an = grads.get(id).map_or(0.0, |t| t.data()[k]);
            diff2 += (num - an).powi(2);
            num2 += num * num;
            let scale = num.abs().max(an.abs());
            if scale > floor {
                max_rel = max_rel.max((num - an).abs() / scale);
                checked += 1;
            }
        }
    }
    Ok(GradCheckReport {
        num_params: model.params.num_scalars(),
        max_rel_error: max_rel,
        norm_rel_error: (diff2 / num2.max(f64::MIN_POSITIVE)).sqrt(),
        checked,
    })
}
