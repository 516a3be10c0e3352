use ndarray::{Array4, ArrayView4, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DiffusionError, NoiseSchedule};

pub type PredictorError = Box<dyn std::error::Error + Send + Sync>;

/// Anything that predicts the injected noise `eps` from a noisy batch.
///
/// `x_t` is `(N, C, H, W)`, `cond` is `(N, C_cond, H, W)` and the result
/// must have the shape of `x_t`.
pub trait NoisePredictor {
    fn predict_noise(&self, x_t: ArrayView4<f32>, t: usize, cond: ArrayView4<f32>) -> Result<Array4<f32>, PredictorError>;
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for &P {
    fn predict_noise(&self, x_t: ArrayView4<f32>, t: usize, cond: ArrayView4<f32>) -> Result<Array4<f32>, PredictorError> {
        (**self).predict_noise(x_t, t, cond)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    /// Chain length; must equal the schedule length (plain ancestral sampling).
    pub steps: usize,
    /// Clamp the per-step `x0` estimate to `[-1, 1]`.
    pub clip_x0: bool,
}

impl SampleOptions {
    pub fn full(schedule: &NoiseSchedule) -> Self {
        Self {
            steps: schedule.num_steps(),
            clip_x0: true,
        }
    }
}

/// Ancestral sampling from `x_T ~ N(0, I)` down to `x_0`.
///
/// Every batch item owns a generator seeded from `seeds[n]`, so an item's
/// trajectory does not depend on what else is in the batch. Each step
/// forms the `x0` estimate from the predicted noise, optionally clamps it,
/// and draws from the Gaussian posterior with `sigma_t^2 = beta_t` (no noise
/// at `t = 1`).
pub fn sample<P: NoisePredictor + ?Sized>(
    predictor: &P,
    cond: ArrayView4<f32>,
    channels: usize,
    schedule: &NoiseSchedule,
    seeds: &[u64],
    opts: SampleOptions,
) -> Result<Array4<f32>, DiffusionError> {
    let (n, _, h, w) = cond.dim();
    if seeds.len() != n {
        return Err(DiffusionError::Shape {
            what: "seeds",
            got: vec![seeds.len()],
            expected: vec![n],
        });
    }
    if opts.steps != schedule.num_steps() {
        return Err(DiffusionError::StepCount {
            requested: opts.steps,
            available: schedule.num_steps(),
        });
    }
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();
    let mut x = Array4::<f32>::zeros((n, channels, h, w));
    for (mut item, rng) in x.axis_iter_mut(Axis(0)).zip(rngs.iter_mut()) {
        item.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }

    for t in (1..=opts.steps).rev() {
        let eps = predictor
            .predict_noise(x.view(), t, cond)
            .map_err(|source| DiffusionError::Predictor { step: t, source })?;
        if eps.dim() != x.dim() {
            return Err(DiffusionError::Shape {
                what: "predicted noise",
                got: eps.shape().to_vec(),
                expected: x.shape().to_vec(),
            });
        }
        let (sa, sb) = schedule.marginal_scales(t);
        let (c_x0, c_xt) = schedule.posterior_mean_coefs(t);
        let sigma = if t > 1 { schedule.sigma(t) as f32 } else { 0.0 };
        let (sa, sb, c_x0, c_xt) = (sa as f32, sb as f32, c_x0 as f32, c_xt as f32);
        let clip = opts.clip_x0;
        Zip::from(&mut x).and(&eps).for_each(|xv, &e| {
            let mut x0 = (*xv - sb * e) / sa;
            if clip {
                x0 = x0.clamp(-1.0, 1.0);
            }
            *xv = c_x0 * x0 + c_xt * *xv;
        });
        if sigma > 0.0 {
            for (mut item, rng) in x.axis_iter_mut(Axis(0)).zip(rngs.iter_mut()) {
                item.iter_mut().for_each(|v| {
                    let z: f32 = rng.sample(StandardNormal);
                    *v += sigma * z;
                });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFinite { step: t });
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Zero;
    impl NoisePredictor for Zero {
        fn predict_noise(&self, x_t: ArrayView4<f32>, _t: usize, _c: ArrayView4<f32>) -> Result<Array4<f32>, PredictorError> {
            Ok(Array4::zeros(x_t.dim()))
        }
    }

    struct Exploding;
    impl NoisePredictor for Exploding {
        fn predict_noise(&self, x_t: ArrayView4<f32>, _t: usize, _c: ArrayView4<f32>) -> Result<Array4<f32>, PredictorError> {
            Ok(Array4::from_elem(x_t.dim(), f32::NAN))
        }
    }

    #[test]
    fn deterministic_and_batch_independent() {
        let s = NoiseSchedule::linear(20, 1e-3, 0.2).unwrap();
        let cond = Array4::<f32>::zeros((3, 2, 4, 4));
        let opts = SampleOptions::full(&s);
        let a = sample(&Zero, cond.view(), 2, &s, &[1, 2, 3], opts).unwrap();
        let b = sample(&Zero, cond.view(), 2, &s, &[1, 2, 3], opts).unwrap();
        assert_eq!(a, b);
        let single = sample(&Zero, cond.slice(ndarray::s![1..2, .., .., ..]), 2, &s, &[2], opts).unwrap();
        assert_eq!(single.index_axis(Axis(0), 0), a.index_axis(Axis(0), 1));
    }

    #[test]
    fn single_step_chain_returns_clamped_estimate() {
        let s = NoiseSchedule::linear(1, 0.5, 0.5).unwrap();
        let cond = Array4::<f32>::zeros((1, 0, 8, 8));
        let out = sample(&Zero, cond.view(), 1, &s, &[9], SampleOptions::full(&s)).unwrap();
        // x0 estimate = x_1 / sqrt(0.5), clamped
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &v in out.iter() {
            let x1: f32 = rng.sample(StandardNormal);
            assert!((v - (x1 / 0.5f32.sqrt()).clamp(-1.0, 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn errors() {
        let s = NoiseSchedule::linear(5, 1e-3, 0.2).unwrap();
        let cond = Array4::<f32>::zeros((1, 0, 2, 2));
        let opts = SampleOptions { steps: 4, clip_x0: true };
        assert!(matches!(
            sample(&Zero, cond.view(), 1, &s, &[0], opts),
            Err(DiffusionError::StepCount { .. })
        ));
        assert!(matches!(
            sample(&Exploding, cond.view(), 1, &s, &[0], SampleOptions { clip_x0: false, ..SampleOptions::full(&s) }),
            Err(DiffusionError::NonFinite { step: 5 })
        ));
        assert!(sample(&Zero, cond.view(), 1, &s, &[0, 1], SampleOptions::full(&s)).is_err());
    }
}
