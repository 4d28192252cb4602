use std::fmt::Write as _;

use super::consistency::LrConsistency;
use super::train::hr_reference;
use super::{ParentMode, SamplerConfig};
use crate::degradation::DegradationModel;
use crate::denoiser::{predict_noise, DenoiserBank, DenoiserInput};
use crate::diffusion::reverse_step;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use crate::wavelet::atrous_decompose;

/// One hashed state: `x(scale)_step`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub scale: usize,
    pub step: usize,
    pub hash: String,
}

/// Hashes of every state the sampler produced and every parent it consumed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTrace {
    /// Produced states, including each scale's starting state at step `K`.
    pub states: Vec<TraceEntry>,
    /// `(consumer step, parent)`: the parent entry names the coarse scale and
    /// the step of its trajectory that was fed to the network.
    pub parents: Vec<(usize, TraceEntry)>,
    /// `(scale, step, ||D(x) - y||^2)` right after each consistency step.
    pub residuals: Vec<(usize, usize, f64)>,
}

impl SampleTrace {
    /// Plain-text manifest, one line per record:
    /// `state <s> <t> <hash>` and `parent <s> <t> <parent_s> <parent_t> <hash>`.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for e in &self.states {
            let _ = writeln!(out, "state {} {} {}", e.scale, e.step, e.hash);
        }
        for (t, p) in &self.parents {
            let _ = writeln!(out, "parent {} {} {} {} {}", p.scale + 1, t, p.scale, p.step, p.hash);
        }
        out
    }

    pub fn state(&self, scale: usize, step: usize) -> Option<&TraceEntry> {
        self.states.iter().find(|e| e.scale == scale && e.step == step)
    }
}

fn check_bank<T: Scalar>(bank: &DenoiserBank<T>, cfg: &SamplerConfig, channels: usize) -> Result<()> {
    let c = bank.config();
    if c.levels != cfg.levels {
        return Err(Error::invalid(format!(
            "checkpoint was trained with S = {} but the sampler is configured with S = {}",
            c.levels, cfg.levels
        )));
    }
    if c.timesteps != cfg.timesteps {
        return Err(Error::invalid(format!(
            "checkpoint was trained with T = {} but the sampler is configured with T = {}",
            c.timesteps, cfg.timesteps
        )));
    }
    if c.channels != channels {
        return Err(Error::invalid(format!("checkpoint has {} channels, image has {channels}", c.channels)));
    }
    if c.conditioning != cfg.parent_mode.conditioning() {
        return Err(Error::invalid(format!(
            "parent mode {} needs a {:?} network, checkpoint holds {:?}",
            cfg.parent_mode.name(),
            cfg.parent_mode.conditioning(),
            c.conditioning
        )));
    }
    let n = bank.networks.len();
    if n != 1 && n != cfg.levels + 1 {
        return Err(Error::invalid(format!("checkpoint holds {n} networks for {} scales", cfg.levels + 1)));
    }
    Ok(())
}

/// Coarse-to-fine reverse diffusion with LR-consistency corrections.
/// Returns the finest estimate clamped to `[0, 1]`.
pub fn sample<T: Scalar>(
    y: &Image<T>,
    bank: &DenoiserBank<T>,
    cfg: &SamplerConfig,
    model: &DegradationModel,
) -> Result<Image<T>> {
    run(y, bank, cfg, model, None)
}

/// [`sample`] that also returns hashes of every state and parent.
pub fn sample_traced<T: Scalar>(
    y: &Image<T>,
    bank: &DenoiserBank<T>,
    cfg: &SamplerConfig,
    model: &DegradationModel,
) -> Result<(Image<T>, SampleTrace)> {
    let mut trace = SampleTrace::default();
    let x = run(y, bank, cfg, model, Some(&mut trace))?;
    Ok((x, trace))
}

fn run<T: Scalar>(
    y: &Image<T>,
    bank: &DenoiserBank<T>,
    cfg: &SamplerConfig,
    model: &DegradationModel,
    mut trace: Option<&mut SampleTrace>,
) -> Result<Image<T>> {
    cfg.validate()?;
    check_bank(bank, cfg, y.channels())?;
    let sched = cfg.sampling_schedule()?;
    let steps = sched.len();
    let x_ref = hr_reference(y, model)?;
    let (h, w, c) = (x_ref.height(), x_ref.width(), x_ref.channels());
    let lr = LrConsistency::new(model, h, w)?;
    let injected = if cfg.levels > 0 && !cfg.d_train_only { Some(atrous_decompose(&x_ref, cfg.levels)?) } else { None };
    let mut rng = stream_rng(cfg.seed, Stream::Sampler);

    // prev[k] holds x(s-1)_k for k = 0..=steps.
    let mut prev: Vec<Image<T>> = Vec::new();
    for s in 0..=cfg.levels {
        let start = if s == 0 {
            Image::randn(h, w, c, &mut rng)
        } else {
            let mut x = prev[0].clone();
            if let Some(p) = &injected {
                x.add_scaled(p.detail(s), T::c(cfg.detail_gain))?;
            }
            x
        };
        let mut traj = vec![Image::zeros(0, 0, 0); steps + 1];
        if let Some(tr) = trace.as_deref_mut() {
            tr.states.push(TraceEntry { scale: s, step: steps, hash: start.content_hash() });
        }
        traj[steps] = start;
        let net = bank.network_for(s);
        for k in (1..=steps).rev() {
            let parent_step = match cfg.parent_mode {
                _ if s == 0 => None,
                ParentMode::None => None,
                ParentMode::TimeAligned => Some(k),
                ParentMode::MisalignedPrevT => Some((k - 1).max(1)),
                ParentMode::CoarseFinal => Some(0),
            };
            let parent = parent_step.map(|j| &prev[j]);
            if let (Some(tr), Some(j), Some(p)) = (trace.as_deref_mut(), parent_step, parent) {
                tr.parents.push((k, TraceEntry { scale: s - 1, step: j, hash: p.content_hash() }));
            }
            let x_t = &traj[k];
            let inp = DenoiserInput { x_t, parent, t: sched.model_timestep(k), scale: s };
            let eps = predict_noise(&inp, net)?;
            let x = reverse_step(x_t, &eps, k, &sched, &mut rng)?;
            let x = lr.step(&x, y, cfg.eta)?;
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("sampler state became non-finite at scale {s}, step {k}")));
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.states.push(TraceEntry { scale: s, step: k - 1, hash: x.content_hash() });
                tr.residuals.push((s, k, lr.loss(&x, y)?.as_f64()));
            }
            traj[k - 1] = x;
        }
        prev = traj;
    }
    Ok(prev[0].clamp01())
}
