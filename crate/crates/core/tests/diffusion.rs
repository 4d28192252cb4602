use atrous_sr::diffusion::{forward_noise, reverse_mean, reverse_step};
use atrous_sr::{stream_rng, Image, ImageF64, NoiseSchedule, SigmaKind, Stream};
use num::{BigInt, BigRational, One, ToPrimitive};
use rand::Rng;

fn random(n: usize, seed: u64) -> ImageF64 {
    let mut rng = stream_rng(seed, Stream::NoiseSynthesis);
    Image::from_fn(1, n, 1, |_, _, _| rng.random_range(-2.0..2.0))
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact alpha and alpha_bar for the linear schedule 1e-4 .. 2e-2 over `steps`.
fn exact_schedule(steps: i64) -> (Vec<BigRational>, Vec<BigRational>) {
    let (lo, hi) = (ratio(1, 10_000), ratio(2, 100));
    let mut alpha = Vec::new();
    let mut alpha_bar = vec![BigRational::one()];
    for i in 0..steps {
        let beta = &lo + (&hi - &lo) * ratio(i, steps - 1);
        let a = BigRational::one() - beta;
        alpha_bar.push(alpha_bar.last().unwrap() * &a);
        alpha.push(a);
    }
    (alpha, alpha_bar)
}

#[test]
fn exact_noise_round_trip_matches_rational_coefficients() {
    let steps = 10;
    let sched = NoiseSchedule::linear(steps, 1e-4, 0.02, 0.3).unwrap();
    let (alpha, alpha_bar) = exact_schedule(steps as i64);
    let x0 = random(64, 1);
    let eps = random(64, 2);
    for t in 1..=steps {
        let a = &alpha[t - 1];
        let ab = &alpha_bar[t];
        // mean = sqrt(abar_{t-1}) x0 + (alpha_t - abar_t) / sqrt(alpha_t (1 - abar_t)) eps
        let x_coef = alpha_bar[t - 1].to_f64().unwrap().sqrt();
        let num = (a - ab).to_f64().unwrap();
        let den = (a * (BigRational::one() - ab)).to_f64().unwrap().sqrt();
        let eps_coef = num / den;
        let x_t = forward_noise(&x0, t, &eps, &sched).unwrap();
        let mean = reverse_mean(&x_t, &eps, t, &sched).unwrap();
        for i in 0..64 {
            let want = x_coef * x0.data()[i] + eps_coef * eps.data()[i];
            assert!((mean.data()[i] - want).abs() < 1e-12, "t = {t}: {} vs {want}", mean.data()[i]);
        }
    }
}

#[test]
fn reverse_mean_at_final_step_matches_scalar_formula() {
    let sched = NoiseSchedule::linear(100, 1e-4, 0.02, 0.3).unwrap();
    let (alpha, alpha_bar) = exact_schedule(100);
    let (a, ab) = (alpha[99].to_f64().unwrap(), alpha_bar[100].to_f64().unwrap());
    let x_t = random(50, 3);
    let eps = random(50, 4);
    let mean = reverse_mean(&x_t, &eps, 100, &sched).unwrap();
    for i in 0..50 {
        let want = (x_t.data()[i] - (1.0 - a) / (1.0 - ab).sqrt() * eps.data()[i]) / a.sqrt();
        assert!((mean.data()[i] - want).abs() < 1e-12);
    }
}

#[test]
fn reverse_step_adds_scaled_gaussian() {
    let sched = NoiseSchedule::linear(20, 1e-4, 0.05, 0.7).unwrap();
    let (alpha, alpha_bar) = exact_schedule_generic(20, 0.05);
    let x_t = random(30, 5);
    let eps = random(30, 6);
    for t in [1, 2, 11, 20] {
        let out = reverse_step(&x_t, &eps, t, &sched, &mut stream_rng(8, Stream::Sampler)).unwrap();
        let z = ImageF64::randn(1, 30, 1, &mut stream_rng(8, Stream::Sampler));
        let var = (1.0 - alpha[t - 1]) * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
        let sigma = 0.7 * var.sqrt();
        if t == 1 {
            assert_eq!(sigma, 0.0);
        }
        let mean = reverse_mean(&x_t, &eps, t, &sched).unwrap();
        for i in 0..30 {
            let want = mean.data()[i] + sigma * z.data()[i];
            assert!((out.data()[i] - want).abs() < 1e-12, "t = {t}");
        }
    }
}

fn exact_schedule_generic(steps: usize, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let alpha: Vec<f64> = (0..steps).map(|i| 1.0 - (1e-4 + (hi - 1e-4) * i as f64 / (steps - 1) as f64)).collect();
    let mut alpha_bar = vec![1.0];
    for a in &alpha {
        alpha_bar.push(alpha_bar.last().unwrap() * a);
    }
    (alpha, alpha_bar)
}

#[test]
fn zero_omega_is_deterministic() {
    let sched = NoiseSchedule::linear(15, 1e-4, 0.02, 0.0).unwrap();
    let x_t = random(20, 7);
    let eps = random(20, 8);
    for t in 1..=15 {
        assert_eq!(sched.sigma(t), 0.0);
        let a = reverse_step(&x_t, &eps, t, &sched, &mut stream_rng(1, Stream::Sampler)).unwrap();
        let b = reverse_step(&x_t, &eps, t, &sched, &mut stream_rng(2, Stream::Sampler)).unwrap();
        assert_eq!(a, reverse_mean(&x_t, &eps, t, &sched).unwrap());
        assert_eq!(a, b);
    }
    for kind in [SigmaKind::Posterior, SigmaKind::Beta] {
        let s = NoiseSchedule::linear_with(15, 1e-4, 0.02, 2.0, kind).unwrap();
        if kind == SigmaKind::Posterior {
            assert_eq!(s.sigma(1), 0.0);
        }
        assert!(s.sigma(15) > 0.0);
    }
}

#[test]
fn forward_noise_moments() {
    let sched = NoiseSchedule::linear(100, 1e-4, 0.02, 0.3).unwrap();
    let t = 50;
    let ab = sched.alpha_bar(t);
    let x0 = ImageF64::filled(1, 1, 1, 0.6);
    let mut rng = stream_rng(11, Stream::NoiseSynthesis);
    let n = 100_000;
    let draws: Vec<f64> =
        (0..n).map(|_| forward_noise(&x0, t, &ImageF64::randn(1, 1, 1, &mut rng), &sched).unwrap().data()[0]).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (mu, s2) = (ab.sqrt() * 0.6, 1.0 - ab);
    assert!((mean - mu).abs() < 3.0 * (s2 / n as f64).sqrt(), "mean {mean} vs {mu}");
    assert!((var - s2).abs() < 3.0 * s2 * (2.0 / (n - 1) as f64).sqrt(), "var {var} vs {s2}");
}

#[test]
fn forward_noise_reductions() {
    let sched = NoiseSchedule::linear(10, 1e-4, 0.02, 0.3).unwrap();
    let x0 = random(10, 9);
    let zero = ImageF64::zeros(1, 10, 1);
    let a = forward_noise(&x0, 7, &zero, &sched).unwrap();
    assert_eq!(a, x0.scale(sched.alpha_bar(7).sqrt()));
    let b = forward_noise(&zero, 7, &x0, &sched).unwrap();
    assert_eq!(b, x0.scale((1.0 - sched.alpha_bar(7)).sqrt()));
    assert!(forward_noise(&x0, 0, &zero, &sched).is_err());
    assert!(forward_noise(&x0, 11, &zero, &sched).is_err());
}

#[test]
fn respaced_schedule_preserves_cumulative_products() {
    let full = NoiseSchedule::linear(100, 1e-4, 0.02, 0.3).unwrap();
    let short = full.respaced(50).unwrap();
    for k in 1..=50 {
        assert_eq!(short.model_timestep(k), 2 * k);
        assert!((short.alpha_bar(k) - full.alpha_bar(2 * k)).abs() < 1e-15);
    }
    assert_eq!(short.sigma(1), 0.0);
}
