use boxforge_core::diffusion::{NoisePredictor, NoiseSchedule, PredictorError};
use ndarray::{Array4, ArrayView4, Axis};

use crate::{DenoiserConfig, Graph, NnError, ParamStore, Scalar, Tensor, UNet, Var};

/// A network mapping `concat(x_t, cond)` and the step to predicted noise.
pub trait Denoiser<F: Scalar> {
    fn predict(&self, g: &mut Graph<F>, input: Var, steps: &[usize]) -> Result<Var, NnError>;
}

impl<F: Scalar> Denoiser<F> for UNet {
    fn predict(&self, g: &mut Graph<F>, input: Var, steps: &[usize]) -> Result<Var, NnError> {
        self.forward(g, input, steps)
    }
}

/// One training batch: clean joint states, their conditioning, the drawn
/// steps and the drawn noise.
#[derive(Debug, Clone)]
pub struct NoisedBatch<F> {
    pub x0: Tensor<F>,
    pub cond: Tensor<F>,
    pub steps: Vec<usize>,
    pub noise: Tensor<F>,
}

/// `x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`, item by item.
pub fn noised_input<F: Scalar>(batch: &NoisedBatch<F>, schedule: &NoiseSchedule) -> Result<Tensor<F>, NnError> {
    let (n, c, h, w) = batch.x0.dims4();
    if batch.noise.shape() != batch.x0.shape() || batch.steps.len() != n {
        return Err(NnError::Shape(format!(
            "x0 {:?}, noise {:?}, {} steps",
            batch.x0.shape(),
            batch.noise.shape(),
            batch.steps.len()
        )));
    }
    let per = c * h * w;
    let mut out = Vec::with_capacity(n * per);
    for (i, &t) in batch.steps.iter().enumerate() {
        schedule.check_step(t).map_err(boxforge_core::diffusion::DiffusionError::from)?;
        let (a, s) = schedule.marginal_scales(t);
        let (a, s) = (F::of(a), F::of(s));
        let x0 = &batch.x0.data()[i * per..(i + 1) * per];
        let e = &batch.noise.data()[i * per..(i + 1) * per];
        out.extend(x0.iter().zip(e).map(|(&x, &e)| a * x + s * e));
    }
    Ok(Tensor::from_vec(&[n, c, h, w], out))
}

/// Mean squared error between the true and the predicted noise.
pub fn training_loss<F: Scalar, D: Denoiser<F> + ?Sized>(
    g: &mut Graph<F>,
    denoiser: &D,
    batch: &NoisedBatch<F>,
    schedule: &NoiseSchedule,
) -> Result<Var, NnError> {
    let xt = noised_input(batch, schedule)?;
    let (xt, cond) = (g.input(xt), g.input(batch.cond.clone()));
    let input = g.concat(xt, cond);
    let eps = denoiser.predict(g, input, &batch.steps)?;
    if g.shape(eps) != batch.noise.shape() {
        return Err(NnError::Shape(format!(
            "denoiser output {:?} does not match noise {:?}",
            g.shape(eps),
            batch.noise.shape()
        )));
    }
    Ok(g.mse(eps, &batch.noise))
}

/// A UNet with its parameters.
#[derive(Debug, Clone)]
pub struct Model<F> {
    pub net: UNet,
    pub params: ParamStore<F>,
}

impl<F: Scalar> Model<F> {
    pub fn new(config: &DenoiserConfig, seed: u64) -> Result<Self, NnError> {
        let (net, params) = UNet::build(config, seed)?;
        Ok(Self { net, params })
    }

    pub fn config(&self) -> &DenoiserConfig {
        self.net.config()
    }

    /// Inference on `(N, in_channels, H, W)`.
    pub fn predict(&self, input: Tensor<F>, steps: &[usize]) -> Result<Tensor<F>, NnError> {
        let mut g = Graph::new(&self.params, false);
        let x = g.input(input);
        let y = self.net.forward(&mut g, x, steps)?;
        Ok(g.take(y))
    }
}

/// Bridges a trained `f32` model to the sampler.
pub struct JointPredictor<'a> {
    pub model: &'a Model<f32>,
    /// Largest sub-batch sent through the network at once.
    pub max_batch: usize,
}

impl NoisePredictor for JointPredictor<'_> {
    fn predict_noise(&self, x_t: ArrayView4<f32>, t: usize, cond: ArrayView4<f32>) -> Result<Array4<f32>, PredictorError> {
        let (n, c, h, w) = x_t.dim();
        let cc = cond.dim().1;
        let mut out = Array4::<f32>::zeros((n, c, h, w));
        let step = self.max_batch.max(1);
        for start in (0..n).step_by(step) {
            let end = (start + step).min(n);
            let m = end - start;
            let mut data = Vec::with_capacity(m * (c + cc) * h * w);
            for i in start..end {
                data.extend(x_t.index_axis(Axis(0), i).iter());
                data.extend(cond.index_axis(Axis(0), i).iter());
            }
            let input = Tensor::from_vec(&[m, c + cc, h, w], data);
            let y = self.model.predict(input, &vec![t; m])?;
            let y = Array4::from_shape_vec((m, c, h, w), y.into_data())?;
            out.slice_mut(ndarray::s![start..end, .., .., ..]).assign(&y);
        }
        Ok(out)
    }
}
