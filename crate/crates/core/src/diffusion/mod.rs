//! Joint image/mask diffusion math: schedule, closed-form forward marginal,
//! ancestral sampler and the packing between samples and network tensors.
//!
//! Tensors are channel-first. A joint state has `3 + b` channels (RGB in
//! `[-1, 1]` then `b` analog bits); conditioning has `1 + b` channels
//! (normalized signed distance then the encoded class map).

mod sampler;
mod schedule;

pub use sampler::{sample, NoisePredictor, PredictorError, SampleOptions};
pub use schedule::{NoiseSchedule, ScheduleError, ScheduleParams};

use ndarray::{concatenate, s, Array, Array2, Array3, ArrayView, ArrayView2, ArrayView3, Axis, Dimension, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::codec::{self, ClassAlphabet, CodecError};
use crate::geometry::{normalize_distance, ConditioningMaps};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("shape mismatch: {what} is {got:?}, expected {expected:?}")]
    Shape {
        what: &'static str,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("sampler asked for {requested} steps but the schedule has {available}")]
    StepCount { requested: usize, available: usize },
    #[error("non-finite value in the sampling chain at step {step}")]
    NonFinite { step: usize },
    #[error("noise predictor failed at step {step}: {source}")]
    Predictor { step: usize, source: PredictorError },
}

/// Channel count of the joint state for a `b`-bit alphabet.
pub fn joint_channels(bit_width: usize) -> usize {
    3 + bit_width
}

/// Channel count of the conditioning stack for a `b`-bit alphabet.
pub fn condition_channels(bit_width: usize) -> usize {
    1 + bit_width
}

/// Closed-form marginal: `x_t = sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps`.
pub fn forward_diffuse<D: Dimension>(
    x0: ArrayView<f32, D>,
    t: usize,
    noise: ArrayView<f32, D>,
    schedule: &NoiseSchedule,
) -> Result<Array<f32, D>, DiffusionError> {
    schedule.check_step(t)?;
    if x0.shape() != noise.shape() {
        return Err(DiffusionError::Shape {
            what: "noise",
            got: noise.shape().to_vec(),
            expected: x0.shape().to_vec(),
        });
    }
    let (a, b) = schedule.marginal_scales(t);
    let (a, b) = (a as f32, b as f32);
    Ok(Zip::from(&x0).and(&noise).map_collect(|&x, &e| a * x + b * e))
}

/// One forward transition `q(x_t | x_{t-1})`.
pub fn forward_step<D: Dimension>(
    x_prev: ArrayView<f32, D>,
    t: usize,
    noise: ArrayView<f32, D>,
    schedule: &NoiseSchedule,
) -> Result<Array<f32, D>, DiffusionError> {
    schedule.check_step(t)?;
    let beta = schedule.beta(t);
    let (a, b) = ((1.0 - beta).sqrt() as f32, beta.sqrt() as f32);
    Ok(Zip::from(&x_prev).and(&noise).map_collect(|&x, &e| a * x + b * e))
}

/// Fills an array of the given shape with standard normal draws.
pub fn standard_normal<R: Rng + ?Sized, Sh: ndarray::ShapeBuilder>(rng: &mut R, shape: Sh) -> Array<f32, Sh::Dim> {
    Array::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}

/// Packs an 8-bit RGB image (`H x W x 3`) and its class mask into the joint
/// state (`3 + b` channels).
pub fn pack_joint(
    image: ArrayView3<u8>,
    mask: ArrayView2<u8>,
    alphabet: &ClassAlphabet,
) -> Result<Array3<f32>, DiffusionError> {
    let (h, w, c) = image.dim();
    if c != 3 || mask.dim() != (h, w) {
        return Err(DiffusionError::Shape {
            what: "image/mask",
            got: vec![h, w, c, mask.nrows(), mask.ncols()],
            expected: vec![h, w, 3, h, w],
        });
    }
    let rgb = image
        .permuted_axes([2, 0, 1])
        .mapv(|v| v as f32 / 127.5 - 1.0);
    let bits = codec::encode(mask, alphabet)?;
    Ok(concatenate(Axis(0), &[rgb.view(), bits.view()]).expect("matching spatial dims"))
}

/// Conditioning stack: normalized distance, then the analog-bit class map.
/// Class 0 (no box) is encoded as background.
pub fn pack_condition(maps: &ConditioningMaps, alphabet: &ClassAlphabet) -> Result<Array3<f32>, DiffusionError> {
    let dist = normalize_distance(maps).insert_axis(Axis(0));
    let classes = maps.class_map.mapv(|c| c.max(alphabet.background()));
    let bits = codec::encode(classes.view(), alphabet)?;
    Ok(concatenate(Axis(0), &[dist.view(), bits.view()]).expect("matching spatial dims"))
}

/// Maps `[-1, 1]` to `0..=255` with round-half-up.
pub fn to_u8(v: f32) -> u8 {
    ((v as f64 + 1.0) * 127.5 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Splits a joint state into an 8-bit RGB image (`H x W x 3`) and a mask.
pub fn decode_joint(x: ArrayView3<f32>, alphabet: &ClassAlphabet) -> Result<(Array3<u8>, Array2<u8>), DiffusionError> {
    let expected = joint_channels(alphabet.bit_width());
    if x.shape()[0] != expected {
        return Err(DiffusionError::Shape {
            what: "joint state",
            got: x.shape().to_vec(),
            expected: vec![expected, x.shape()[1], x.shape()[2]],
        });
    }
    let rgb = x
        .slice(s![0..3, .., ..])
        .permuted_axes([1, 2, 0])
        .mapv(to_u8)
        .as_standard_layout()
        .into_owned();
    let mask = codec::decode(x.slice(s![3.., .., ..]), alphabet)?;
    Ok((rgb, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{compute_maps_fast, BoundingBox, MapOptions};
    use ndarray::{Array1, Array3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_scales_x0() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let x0 = Array1::from_vec(vec![0.5f32, -1.0, 0.25]);
        let xt = forward_diffuse(x0.view(), 40, Array1::zeros(3).view(), &s).unwrap();
        let a = s.alpha_bar(40).sqrt() as f32;
        for (got, want) in xt.iter().zip(x0.iter()) {
            assert!((got - a * want).abs() < 1e-7);
        }
    }

    #[test]
    fn first_step_is_nearly_identity() {
        let s = NoiseSchedule::linear(1000, 1e-6, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = standard_normal(&mut rng, (4, 8, 8));
        let eps = standard_normal(&mut rng, (4, 8, 8));
        let xt = forward_diffuse(x0.view(), 1, eps.view(), &s).unwrap();
        let bound = ((1.0 - s.alpha_bar(1)).sqrt() * eps.mapv(|e| (e * e) as f64).sum().sqrt()) as f32;
        let dist = (&xt - &x0).mapv(|d| d * d).sum().sqrt();
        // small slack for the sqrt(ab) shrink of x0
        assert!(dist <= bound + 1e-3, "{dist} > {bound}");
    }

    #[test]
    fn forward_rejects_shape_and_step() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
        let x = Array1::<f32>::zeros(3);
        assert!(matches!(
            forward_diffuse(x.view(), 3, Array1::zeros(4).view(), &s),
            Err(DiffusionError::Shape { .. })
        ));
        assert!(matches!(
            forward_diffuse(x.view(), 11, x.view(), &s),
            Err(DiffusionError::Schedule(_))
        ));
    }

    #[test]
    fn decode_endpoints_and_mask_passthrough() {
        let a = ClassAlphabet::with_classes(5).unwrap();
        let mask = ndarray::array![[1u8, 2, 3], [4, 5, 1]];
        let bits = codec::encode(mask.view(), &a).unwrap();
        let lo = Array3::from_elem((3, 2, 3), -1.0f32);
        let hi = Array3::from_elem((3, 2, 3), 1.0f32);
        for (rgb, want) in [(lo, 0u8), (hi, 255u8)] {
            let x = concatenate(Axis(0), &[rgb.view(), bits.view()]).unwrap();
            let (img, m) = decode_joint(x.view(), &a).unwrap();
            assert!(img.iter().all(|&v| v == want));
            assert_eq!(m, mask);
        }
        assert_eq!(to_u8(0.0), 128);
    }

    #[test]
    fn pack_roundtrip() {
        let a = ClassAlphabet::with_classes(3).unwrap();
        let image = Array3::from_shape_fn((4, 5, 3), |(i, j, c)| (i * 50 + j * 7 + c * 3) as u8);
        let mask = Array2::from_shape_fn((4, 5), |(i, j)| 1 + ((i + j) % 3) as u8);
        let x = pack_joint(image.view(), mask.view(), &a).unwrap();
        assert_eq!(x.shape(), &[5, 4, 5]);
        let (img2, mask2) = decode_joint(x.view(), &a).unwrap();
        assert_eq!(img2, image);
        assert_eq!(mask2, mask);
    }

    #[test]
    fn condition_stack_layout() {
        let a = ClassAlphabet::with_classes(3).unwrap();
        let maps = compute_maps_fast(&[BoundingBox::new(3, 1, 1, 3, 3)], 6, 6, MapOptions::default()).unwrap();
        let c = pack_condition(&maps, &a).unwrap();
        assert_eq!(c.shape(), &[3, 6, 6]);
        assert_eq!(c[[0, 2, 2]], 1.0 / 6.0);
        // inside: class 3 -> code 10
        assert_eq!((c[[1, 2, 2]], c[[2, 2, 2]]), (1.0, -1.0));
        // outside: background -> code 00
        assert_eq!((c[[1, 5, 5]], c[[2, 5, 5]]), (-1.0, -1.0));
    }
}
