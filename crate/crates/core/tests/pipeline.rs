use atrous_sr::ablation::{desk_image, synthesize_lr};
use atrous_sr::pipeline::{hr_reference, lr_consistency_step, lr_gradient, lr_loss, train_with, training_targets};
use atrous_sr::{
    sample, sample_traced, stream_rng, train, Conditioning, DegradationModel, DenoiserBank, DenoiserConfig,
    DenoiserParams, Image, ImageF64, ParentMode, SamplerConfig, Stream, TrainConfig,
};
use rand::Rng;

mod common;
use common::{naive_degrade, operator_norm_sq, random};

fn models() -> [DegradationModel; 4] {
    [
        DegradationModel::bicubic(2.0),
        DegradationModel::bicubic(3.15),
        DegradationModel::blur(2.0, 1.0),
        DegradationModel::blur(4.0, 1.5),
    ]
}

#[test]
fn lr_loss_matches_naive_evaluator() {
    for (i, model) in models().iter().enumerate() {
        let x = random(24, 20, 2, i as u64);
        let (lh, lw) = model.lr_dims(24, 20);
        let y = random(lh, lw, 2, 100 + i as u64);
        let naive = naive_degrade(&x, model);
        let mut want = 0.0;
        for (a, b) in naive.data().iter().zip(y.data()) {
            want += (a - b) * (a - b);
        }
        let got = lr_loss(&x, &y, model).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn consistent_pair_and_offset() {
    let model = DegradationModel::bicubic(2.0);
    let x = random(16, 16, 1, 1);
    let y = naive_degrade(&x, &model);
    assert!(lr_loss(&x, &y, &model).unwrap() < 1e-24);
    let shifted = y.map(|v| v - 0.25);
    let loss = lr_loss(&x, &shifted, &model).unwrap();
    assert!((loss - 0.0625 * 64.0).abs() < 1e-12);
}

#[test]
fn lr_gradient_matches_finite_differences() {
    let mut rng = stream_rng(5, Stream::NoiseSynthesis);
    for (i, model) in models().iter().enumerate() {
        let x = random(18, 22, 1, 10 + i as u64);
        let (lh, lw) = model.lr_dims(18, 22);
        let y = random(lh, lw, 1, 20 + i as u64);
        let g = lr_gradient(&x, &y, model).unwrap();
        for _ in 0..5 {
            let k = rng.random_range(0..x.len());
            let h = 1e-5;
            let mut xp = x.clone();
            xp.data_mut()[k] += h;
            let mut xm = x.clone();
            xm.data_mut()[k] -= h;
            let fd = (lr_loss(&xp, &y, model).unwrap() - lr_loss(&xm, &y, model).unwrap()) / (2.0 * h);
            let err = (fd - g.data()[k]).abs() / fd.abs().max(g.data()[k].abs()).max(1e-8);
            assert!(err <= 1e-6, "coordinate {k}: fd {fd} vs {}", g.data()[k]);
        }
    }
}

#[test]
fn small_steps_descend() {
    for inst in 0..20u64 {
        let model = &models()[inst as usize % 4];
        let (h, w) = (16 + inst as usize % 5, 20);
        let x = random(h, w, 1, 300 + inst);
        let (lh, lw) = model.lr_dims(h, w);
        let y = random(lh, lw, 1, 400 + inst);
        let bound = 1.0 / (2.0 * operator_norm_sq(model, h, w, 50));
        let before = lr_loss(&x, &y, model).unwrap();
        let after = lr_loss(&lr_consistency_step(&x, &y, model, 0.9 * bound).unwrap(), &y, model).unwrap();
        assert!(after < before, "instance {inst}: {after} >= {before}");
        assert_eq!(lr_consistency_step(&x, &y, model, 0.0).unwrap(), x);
    }
    let x = random(8, 8, 1, 1);
    assert!(lr_consistency_step(&x, &random(4, 4, 1, 2), &models()[0], -0.1).is_err());
}

fn zero_bank(levels: usize, timesteps: usize, conditioning: Conditioning) -> DenoiserBank<f64> {
    let cfg = DenoiserConfig {
        features: 4,
        blocks: 1,
        embed_dim: 4,
        conditioning,
        ..DenoiserConfig::new(1, levels, timesteps)
    };
    DenoiserBank::shared(DenoiserParams::zeros(cfg).unwrap())
}

#[test]
fn guidance_dominates_with_a_silent_denoiser() {
    let model = DegradationModel::bicubic(2.0);
    let gt = desk_image::<f64>(32);
    let y = synthesize_lr(&gt, &model, 0).unwrap();
    let eta = 0.9 / (2.0 * operator_norm_sq(&model, 32, 32, 50));
    let cfg = SamplerConfig { levels: 0, timesteps: 10, eta, parent_mode: ParentMode::None, ..Default::default() };
    let start = ImageF64::randn(32, 32, 1, &mut stream_rng(cfg.seed, Stream::Sampler));
    let x = sample(&y, &zero_bank(0, 10, Conditioning::Univariate), &cfg, &model).unwrap();
    let before = lr_loss(&start, &y, &model).unwrap();
    let after = lr_loss(&x, &y, &model).unwrap();
    assert!(after < before, "{after} >= {before}");
    assert_eq!((x.height(), x.width()), (32, 32));
}

#[test]
fn sampling_is_deterministic_and_bounded() {
    let model = DegradationModel::bicubic(2.0);
    let y = random(8, 8, 1, 3);
    let bank = zero_bank(2, 6, Conditioning::Bivariate);
    let cfg = SamplerConfig { levels: 2, timesteps: 6, seed: 4, ..Default::default() };
    let a = sample(&y, &bank, &cfg, &model).unwrap();
    let b = sample(&y, &bank, &cfg, &model).unwrap();
    assert_eq!(a, b);
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let other = sample(&y, &bank, &SamplerConfig { seed: 5, ..cfg.clone() }, &model).unwrap();
    assert_ne!(a, other);
    let (c, trace) = sample_traced(&y, &bank, &cfg, &model).unwrap();
    assert_eq!(a, c);
    assert_eq!(trace.states.len(), 3 * 7);
}

#[test]
fn constant_observation_gives_identical_targets() {
    let model = DegradationModel::bicubic(2.0);
    let y = Image::<f64>::filled(10, 10, 1, 0.4);
    let cfg = SamplerConfig { levels: 3, ..Default::default() };
    let targets = training_targets(&hr_reference(&y, &model).unwrap(), &cfg).unwrap();
    assert_eq!(targets.len(), 4);
    for t in &targets {
        assert!(t.data().iter().all(|v| (v - 0.4).abs() < 1e-14));
    }
}

#[test]
fn training_makes_progress_on_the_checkerboard() {
    let model = DegradationModel::bicubic(2.0);
    let gt = desk_image::<f32>(64);
    let y = synthesize_lr(&gt, &model, 0).unwrap();
    let tc = TrainConfig {
        iterations: 2000,
        batch: 4,
        patch: 16,
        features: 8,
        blocks: 1,
        embed_dim: 8,
        ..Default::default()
    };
    let sc = SamplerConfig { levels: 3, timesteps: 25, ..Default::default() };
    let mut losses = Vec::new();
    let report = train_with(&y, &model, &tc, &sc, &mut |_, l| losses.push(l)).unwrap();
    assert_eq!(losses, report.losses);
    // Means over the 100 iterations ending at 100 and at 2000.
    let window = |end: usize| losses[end - 100..end].iter().sum::<f64>() / 100.0;
    assert!(window(2000) < window(100), "{} >= {}", window(2000), window(100));
}

#[test]
fn training_is_deterministic() {
    let model = DegradationModel::bicubic(2.0);
    let y = random(12, 12, 1, 8);
    let tc = TrainConfig {
        iterations: 6,
        batch: 3,
        patch: 8,
        features: 4,
        blocks: 1,
        embed_dim: 4,
        seed: 9,
        ..Default::default()
    };
    let sc = SamplerConfig { levels: 2, timesteps: 5, seed: 9, ..Default::default() };
    let a = train(&y, &model, &tc, &sc).unwrap();
    let b = train(&y, &model, &tc, &sc).unwrap();
    assert_eq!(a.bank.networks[0].values(), b.bank.networks[0].values());
    assert_eq!(a.losses, b.losses);
}
