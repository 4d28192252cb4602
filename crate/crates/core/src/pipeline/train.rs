use rand::Rng;

use super::{SamplerConfig, TrainConfig};
use crate::degradation::DegradationModel;
use crate::denoiser::{
    adam_step, loss_and_grad, AdamConfig, AdamState, Conditioning, DenoiserBank, DenoiserConfig, DenoiserParams,
    TrainingExample,
};
use crate::diffusion::forward_noise;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::bicubic_resample;
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use crate::wavelet::{atrous_decompose, partial_targets};

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub bank: DenoiserBank<T>,
    /// Mean batch loss of every iteration.
    pub losses: Vec<f64>,
}

/// Bicubic upsampling of `y` onto the HR grid implied by `model`.
pub fn hr_reference<T: Scalar>(y: &Image<T>, model: &DegradationModel) -> Result<Image<T>> {
    model.validate()?;
    let (h, w) = model.hr_dims(y.height(), y.width());
    bicubic_resample(y, h, w)
}

/// Clean targets `x(0)_0 ..= x(S)_0`; just `[x_ref]` when `S = 0`.
pub fn training_targets<T: Scalar>(x_ref: &Image<T>, cfg: &SamplerConfig) -> Result<Vec<Image<T>>> {
    if cfg.levels == 0 {
        return Ok(vec![x_ref.clone()]);
    }
    let pyramid = atrous_decompose(x_ref, cfg.levels)?;
    partial_targets(&pyramid, cfg.detail_gain)
}

pub fn train<T: Scalar>(
    y: &Image<T>,
    model: &DegradationModel,
    train_cfg: &TrainConfig,
    sampler_cfg: &SamplerConfig,
) -> Result<TrainReport<T>> {
    train_with(y, model, train_cfg, sampler_cfg, &mut |_, _| {})
}

/// Like [`train`], calling `on_iter(i, loss)` after every iteration.
pub fn train_with<T: Scalar>(
    y: &Image<T>,
    model: &DegradationModel,
    train_cfg: &TrainConfig,
    sampler_cfg: &SamplerConfig,
    on_iter: &mut dyn FnMut(usize, f64),
) -> Result<TrainReport<T>> {
    train_cfg.validate()?;
    sampler_cfg.validate()?;
    let x_ref = hr_reference(y, model)?;
    let (h, w) = (x_ref.height(), x_ref.width());
    let p = train_cfg.patch;
    if p > h.min(w) {
        return Err(Error::invalid(format!("patch {p} exceeds the {h}x{w} HR grid")));
    }
    let targets = training_targets(&x_ref, sampler_cfg)?;
    let sched = sampler_cfg.training_schedule()?;
    let levels = sampler_cfg.levels;
    let conditioning = sampler_cfg.parent_mode.conditioning();
    let net_cfg = DenoiserConfig {
        channels: y.channels(),
        features: train_cfg.features,
        blocks: train_cfg.blocks,
        embed_dim: train_cfg.embed_dim,
        levels,
        timesteps: sampler_cfg.timesteps,
        conditioning,
        padding: train_cfg.padding,
    };

    let mut init_rng = stream_rng(train_cfg.seed, Stream::Init);
    let n_nets = if train_cfg.separate_networks { levels + 1 } else { 1 };
    let mut nets: Vec<DenoiserParams<T>> =
        (0..n_nets).map(|_| DenoiserParams::init(net_cfg, &mut init_rng)).collect::<Result<_>>()?;
    let mut states: Vec<AdamState<T>> = nets.iter().map(|n| AdamState::new(n.len())).collect();

    let mut rng = stream_rng(train_cfg.seed, Stream::Train);
    let mut losses = Vec::with_capacity(train_cfg.iterations);
    let bivariate = conditioning == Conditioning::Bivariate;
    for it in 0..train_cfg.iterations {
        let mut batch = Vec::with_capacity(train_cfg.batch);
        for _ in 0..train_cfg.batch {
            let s = rng.random_range(0..=levels);
            let t = rng.random_range(1..=sampler_cfg.timesteps);
            let y0 = rng.random_range(0..=h - p);
            let x0 = rng.random_range(0..=w - p);
            let eps = Image::randn(p, p, y.channels(), &mut rng);
            let x_t = forward_noise(&targets[s].crop(y0, x0, p, p)?, t, &eps, &sched)?;
            let parent = if bivariate && s >= 1 {
                let parent_eps = if train_cfg.independent_parent_noise {
                    Image::randn(p, p, y.channels(), &mut rng)
                } else {
                    eps.clone()
                };
                Some(forward_noise(&targets[s - 1].crop(y0, x0, p, p)?, t, &parent_eps, &sched)?)
            } else {
                None
            };
            batch.push(TrainingExample { x_t, parent, t, scale: s, target: eps });
        }

        let adam = AdamConfig { lr: train_cfg.lr_at(it), ..Default::default() };
        let mut loss = 0.0;
        if n_nets == 1 {
            let (l, g) = loss_and_grad(&batch, &nets[0])?;
            loss = l.as_f64();
            check_loss(loss, it)?;
            adam_step(nets[0].values_mut(), &g, &mut states[0], &adam)?;
        } else {
            // Each network sees its own scale; weights keep the batch mean.
            for k in 0..n_nets {
                let subset: Vec<TrainingExample<T>> = batch.iter().filter(|e| e.scale == k).cloned().collect();
                if subset.is_empty() {
                    continue;
                }
                let share = subset.len() as f64 / batch.len() as f64;
                let (l, mut g) = loss_and_grad(&subset, &nets[k])?;
                loss += l.as_f64() * share;
                check_loss(loss, it)?;
                let c = T::c(share);
                g.iter_mut().for_each(|v| *v *= c);
                adam_step(nets[k].values_mut(), &g, &mut states[k], &adam)?;
            }
        }
        losses.push(loss);
        on_iter(it, loss);
    }
    Ok(TrainReport { bank: DenoiserBank { networks: nets }, losses })
}

fn check_loss(loss: f64, it: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("training loss became {loss} at iteration {}", it + 1)))
    }
}
