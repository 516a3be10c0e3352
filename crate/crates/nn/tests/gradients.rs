use boxforge_core::diffusion::NoiseSchedule;
use boxforge_nn::gradcheck::{check_training_loss, tiny_denoiser};
use boxforge_nn::{training_loss, Denoiser, Graph, NnError, NoisedBatch, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn unet_training_loss_matches_finite_differences() {
    let cfg = tiny_denoiser();
    let r = check_training_loss(&cfg, 4, 11).unwrap();
    assert!(r.num_params <= 1000, "{} parameters", r.num_params);
    assert!(r.checked > r.num_params / 2);
    assert!(r.max_rel_error <= 1e-3, "{r:?}");
}

/// Returns a fixed tensor regardless of its input.
struct Fixed(Tensor<f64>);

impl Denoiser<f64> for Fixed {
    fn predict(&self, g: &mut Graph<f64>, _input: Var, _steps: &[usize]) -> Result<Var, NnError> {
        Ok(g.input(self.0.clone()))
    }
}

fn batch(seed: u64) -> NoisedBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |shape: &[usize]| Tensor::from_vec(shape, (0..shape.iter().product()).map(|_| rng.sample(StandardNormal)).collect());
    NoisedBatch {
        x0: draw(&[16, 5, 16, 16]),
        cond: draw(&[16, 3, 16, 16]),
        noise: draw(&[16, 5, 16, 16]),
        steps: (1..=16).map(|i| i * 12).collect(),
    }
}

#[test]
fn oracle_predictor_has_zero_loss_and_zero_predictor_unit_loss() {
    let schedule = NoiseSchedule::linear(200, 1e-4, 0.02).unwrap();
    let b = batch(3);
    let store = ParamStore::new();
    let mut g = Graph::new(&store, false);
    let l = training_loss(&mut g, &Fixed(b.noise.clone()), &b, &schedule).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
    let l0 = training_loss(&mut g, &Fixed(Tensor::zeros(b.noise.shape())), &b, &schedule).unwrap();
    let v = g.value(l0).item();
    assert!((v - 1.0).abs() < 0.05, "zero predictor loss {v}");
}

#[test]
fn out_of_range_step_is_an_error() {
    let schedule = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
    let mut b = batch(4);
    b.steps[0] = 11;
    let store = ParamStore::new();
    let mut g = Graph::new(&store, false);
    assert!(training_loss(&mut g, &Fixed(b.noise.clone()), &b, &schedule).is_err());
}
