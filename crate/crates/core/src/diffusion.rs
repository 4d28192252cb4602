//! Linear noise schedule, forward noising and the DDPM reverse transition.
//!
//! Timesteps are 1-based throughout: `t = 1..=T`, with `alpha_bar(0) = 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Which variance the reverse-step std is scaled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaKind {
    /// `sigma_t = omega * sqrt(beta_t (1 - abar_{t-1}) / (1 - abar_t))`
    #[default]
    Posterior,
    /// `sigma_t = omega * sqrt(beta_t)`
    Beta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
    /// Timestep of the training schedule that step `t` corresponds to.
    model_t: Vec<usize>,
    omega: f64,
    sigma_kind: SigmaKind,
}

impl NoiseSchedule {
    /// `beta` linearly spaced from `beta_start` to `beta_end` over `steps` steps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64, omega: f64) -> Result<Self> {
        Self::linear_with(steps, beta_start, beta_end, omega, SigmaKind::Posterior)
    }

    pub fn linear_with(
        steps: usize,
        beta_start: f64,
        beta_end: f64,
        omega: f64,
        sigma_kind: SigmaKind,
    ) -> Result<Self> {
        if steps < 1 {
            return Err(Error::invalid("schedule needs at least one timestep"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::invalid(format!("omega {omega} must be >= 0")));
        }
        let beta: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps).map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64).collect()
        };
        Ok(Self::from_betas(beta, (1..=steps).collect(), omega, sigma_kind))
    }

    fn from_betas(beta: Vec<f64>, model_t: Vec<usize>, omega: f64, sigma_kind: SigmaKind) -> Self {
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut prod = 1.0;
        for &a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        let sigma = (0..beta.len())
            .map(|i| {
                let var = match sigma_kind {
                    SigmaKind::Posterior => {
                        let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                        beta[i] * (1.0 - prev) / (1.0 - alpha_bar[i])
                    }
                    SigmaKind::Beta => beta[i],
                };
                omega * var.sqrt()
            })
            .collect();
        NoiseSchedule { beta, alpha, alpha_bar, sigma, model_t, omega, sigma_kind }
    }

    /// A shorter schedule visiting `steps` evenly spaced timesteps of this one,
    /// with betas recomputed so the cumulative products match at those steps.
    pub fn respaced(&self, steps: usize) -> Result<Self> {
        let full = self.len();
        if steps < 1 || steps > full {
            return Err(Error::invalid(format!("cannot respace {full} timesteps to {steps}")));
        }
        let picks: Vec<usize> = (1..=steps).map(|k| ((k * full) as f64 / steps as f64).round() as usize).collect();
        let mut beta = Vec::with_capacity(steps);
        let mut prev = 1.0;
        for &t in &picks {
            let ab = self.alpha_bar(t);
            beta.push(1.0 - ab / prev);
            prev = ab;
        }
        let model_t = picks.iter().map(|&t| self.model_t[t - 1]).collect();
        Ok(Self::from_betas(beta, model_t, self.omega, self.sigma_kind))
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// Cumulative product; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    pub fn model_timestep(&self, t: usize) -> usize {
        self.model_t[t - 1]
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.len() {
            return Err(Error::invalid(format!("timestep {t} outside 1..={}", self.len())));
        }
        Ok(())
    }
}

/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`
pub fn forward_noise<T: Scalar>(x0: &Image<T>, t: usize, eps: &Image<T>, sched: &NoiseSchedule) -> Result<Image<T>> {
    sched.check_t(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (T::c(ab.sqrt()), T::c((1.0 - ab).sqrt()));
    x0.zip_map(eps, |x, e| a * x + b * e)
}

/// `(x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)`
pub fn reverse_mean<T: Scalar>(
    x_t: &Image<T>,
    eps_hat: &Image<T>,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Image<T>> {
    sched.check_t(t)?;
    let alpha = sched.alpha(t);
    let inv_sqrt_alpha = T::c(1.0 / alpha.sqrt());
    let eps_coef = T::c((1.0 - alpha) / (1.0 - sched.alpha_bar(t)).sqrt());
    x_t.zip_map(eps_hat, |x, e| inv_sqrt_alpha * (x - eps_coef * e))
}

/// Mean plus `sigma_t z`; `z` is drawn only when `sigma_t > 0`.
pub fn reverse_step<T: Scalar, R: Rng + ?Sized>(
    x_t: &Image<T>,
    eps_hat: &Image<T>,
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Image<T>> {
    let mut mean = reverse_mean(x_t, eps_hat, t, sched)?;
    let sigma = sched.sigma(t);
    if sigma > 0.0 {
        let z = Image::randn(mean.height(), mean.width(), mean.channels(), rng);
        mean.add_scaled(&z, T::c(sigma))?;
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn single_step_schedule() {
        let s = NoiseSchedule::linear(1, 0.01, 0.01, 0.7).unwrap();
        assert_eq!(s.alpha(1), 0.99);
        assert_eq!(s.alpha_bar(1), 0.99);
        assert_eq!(s.sigma(1), 0.0);
    }

    #[test]
    fn two_step_product() {
        let s = NoiseSchedule::linear(2, 1e-4, 2e-4, 1.0).unwrap();
        // (1 - 1e-4)(1 - 2e-4) = 0.99970002 exactly
        assert!((s.alpha_bar(2) - 0.99970002).abs() < 1e-15);
        assert_eq!(s.alpha_bar(2), s.alpha_bar(1) * s.alpha(2));
    }

    #[test]
    fn invariants_default_schedule() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.02, 0.3).unwrap();
        for t in 1..=100 {
            assert_eq!(s.alpha(t) + s.beta(t), 1.0);
            assert!(s.sigma(t) >= 0.0);
            assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t));
            if t > 1 {
                assert!(s.beta(t) >= s.beta(t - 1));
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
        }
        assert_eq!(s.sigma(1), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSchedule::linear(0, 1e-4, 0.02, 0.3).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.02, 0.3).is_err());
        assert!(NoiseSchedule::linear(10, 0.03, 0.02, 0.3).is_err());
        assert!(NoiseSchedule::linear(10, 1e-4, 1.0, 0.3).is_err());
        assert!(NoiseSchedule::linear(10, 1e-4, 0.02, -1.0).is_err());
    }

    #[test]
    fn beta_sigma_kind() {
        let s = NoiseSchedule::linear_with(10, 1e-4, 0.02, 0.5, SigmaKind::Beta).unwrap();
        assert_eq!(s.sigma(3), 0.5 * s.beta(3).sqrt());
    }

    #[test]
    fn respacing_keeps_cumulative_products() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.02, 0.3).unwrap();
        let r = s.respaced(50).unwrap();
        assert_eq!(r.len(), 50);
        for k in 1..=50 {
            let t = r.model_timestep(k);
            assert_eq!(t, 2 * k);
            assert!((r.alpha_bar(k) - s.alpha_bar(t)).abs() < 1e-14);
        }
        assert_eq!(s.respaced(100).unwrap().model_timestep(37), 37);
        assert!(s.respaced(0).is_err());
        assert!(s.respaced(101).is_err());
    }

    #[test]
    fn deterministic_branches() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02, 0.3).unwrap();
        let mut rng = stream_rng(1, Stream::Sampler);
        let x0 = Image::<f64>::randn(3, 3, 1, &mut rng);
        let eps = Image::<f64>::randn(3, 3, 1, &mut rng);
        let zero = Image::zeros_like(&x0);
        let t = 4;
        let a = forward_noise(&x0, t, &zero, &s).unwrap();
        assert_eq!(a, x0.scale(s.alpha_bar(t).sqrt()));
        let b = forward_noise(&zero, t, &eps, &s).unwrap();
        assert_eq!(b, eps.scale((1.0 - s.alpha_bar(t)).sqrt()));
        let m = reverse_mean(&x0, &zero, t, &s).unwrap();
        assert_eq!(m, x0.map(|v| (1.0 / s.alpha(t).sqrt()) * (v - 0.0)));
        assert!(forward_noise(&x0, 11, &eps, &s).is_err());
        assert!(forward_noise(&x0, 0, &eps, &s).is_err());
    }

    #[test]
    fn zero_omega_is_deterministic() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02, 0.0).unwrap();
        let mut rng = stream_rng(2, Stream::Sampler);
        let x = Image::<f64>::randn(4, 4, 1, &mut rng);
        let e = Image::<f64>::randn(4, 4, 1, &mut rng);
        for t in 1..=10 {
            let step = reverse_step(&x, &e, t, &s, &mut rng).unwrap();
            assert_eq!(step, reverse_mean(&x, &e, t, &s).unwrap());
        }
    }

    #[test]
    fn first_step_ignores_omega() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02, 5.0).unwrap();
        let mut rng = stream_rng(3, Stream::Sampler);
        let x = Image::<f64>::randn(4, 4, 1, &mut rng);
        let e = Image::<f64>::randn(4, 4, 1, &mut rng);
        let a = reverse_step(&x, &e, 1, &s, &mut stream_rng(1, Stream::Sampler)).unwrap();
        let b = reverse_step(&x, &e, 1, &s, &mut stream_rng(99, Stream::Sampler)).unwrap();
        assert_eq!(a, b);
    }
}
