use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule needs at least one step")]
    NoSteps,
    #[error("betas must satisfy 0 < beta_start <= beta_end < 1, got [{start}, {end}]")]
    BetaRange { start: f64, end: f64 },
    #[error("step {t} outside 1..={num_steps}")]
    StepOutOfRange { t: usize, num_steps: usize },
}

/// The parameters a schedule is rebuilt from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub num_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            num_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

/// Linear-beta DDPM schedule. Steps are 1-based: `t` runs over `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    betas: Vec<f64>,
    alphas_cumprod: Vec<f64>,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self, ScheduleError> {
        Self::from_params(ScheduleParams {
            num_steps,
            beta_start,
            beta_end,
        })
    }

    pub fn from_params(params: ScheduleParams) -> Result<Self, ScheduleError> {
        let ScheduleParams {
            num_steps,
            beta_start,
            beta_end,
        } = params;
        if num_steps == 0 {
            return Err(ScheduleError::NoSteps);
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(ScheduleError::BetaRange {
                start: beta_start,
                end: beta_end,
            });
        }
        let betas: Vec<f64> = if num_steps == 1 {
            vec![beta_start]
        } else {
            (0..num_steps)
                .map(|k| beta_start + (beta_end - beta_start) * k as f64 / (num_steps - 1) as f64)
                .collect()
        };
        let alphas_cumprod = betas
            .iter()
            .scan(1.0f64, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        // fixed-small reverse variance: sigma_t^2 = beta_t
        let sigmas = betas.iter().map(|b| b.sqrt()).collect();
        Ok(Self {
            params,
            betas,
            alphas_cumprod,
            sigmas,
        })
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<(), ScheduleError> {
        if t == 0 || t > self.num_steps() {
            Err(ScheduleError::StepOutOfRange {
                t,
                num_steps: self.num_steps(),
            })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// Cumulative product of `1 - beta` up to and including step `t`;
    /// `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alphas_cumprod[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas_cumprod(&self) -> &[f64] {
        &self.alphas_cumprod
    }

    /// `(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))`, the scales of `x0` and
    /// `eps` in the closed-form marginal.
    pub fn marginal_scales(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        (ab.sqrt(), (1.0 - ab).sqrt())
    }

    /// Coefficients of the Gaussian posterior mean
    /// `mu = c_x0 * x0 + c_xt * x_t`.
    pub fn posterior_mean_coefs(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let beta = self.beta(t);
        let c_x0 = beta * ab_prev.sqrt() / (1.0 - ab);
        let c_xt = (1.0 - ab_prev) * (1.0 - beta).sqrt() / (1.0 - ab);
        (c_x0, c_xt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let s = NoiseSchedule::linear(1, 0.02, 0.02).unwrap();
        assert!((s.alpha_bar(1) - 0.98).abs() < 1e-15);
        let (c_x0, c_xt) = s.posterior_mean_coefs(1);
        assert!((c_x0 - 1.0).abs() < 1e-12);
        assert_eq!(c_xt, 0.0);
    }

    #[test]
    fn standard_schedule_ends_near_zero() {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        assert!(s.alpha_bar(1000) < 5e-5);
        assert!(s.alpha_bar(1) > 0.9998);
        for t in 2..=1000 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            let recur = s.alpha_bar(t - 1) * (1.0 - s.beta(t));
            assert!((s.alpha_bar(t) - recur).abs() < 1e-12);
            assert_eq!(s.sigma(t) * s.sigma(t), s.beta(t).sqrt().powi(2));
        }
    }

    #[test]
    fn parameter_errors() {
        assert_eq!(NoiseSchedule::linear(0, 0.1, 0.2), Err(ScheduleError::NoSteps));
        assert!(NoiseSchedule::linear(10, 0.0, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.3, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0).is_err());
        let s = NoiseSchedule::linear(10, 0.1, 0.2).unwrap();
        assert!(s.check_step(0).is_err());
        assert!(s.check_step(11).is_err());
        assert!(s.check_step(10).is_ok());
    }
}
