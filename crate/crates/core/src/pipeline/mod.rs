//! Per-image training and the coarse-to-fine sampler.

mod consistency;
mod sample;
mod train;

use serde::{Deserialize, Serialize};

use crate::denoiser::{Conditioning, Padding};
use crate::diffusion::{NoiseSchedule, SigmaKind};
use crate::error::{Error, Result};
use crate::wavelet::WaveletConfig;

pub use consistency::{lr_consistency_step, lr_gradient, lr_loss, LrConsistency};
pub use sample::{sample, sample_traced, SampleTrace, TraceEntry};
pub use train::{hr_reference, train, train_with, training_targets, TrainReport};

/// Which coarse-scale state the denoiser sees at scale `s >= 1` and step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParentMode {
    /// `x(s-1)_t` from the recorded coarse trajectory.
    #[default]
    TimeAligned,
    /// `x(s-1)_{t-1}`, with `t - 1` clamped to 1.
    MisalignedPrevT,
    /// The finished coarse estimate `x(s-1)_0` at every step.
    CoarseFinal,
    /// Univariate model; no parent input.
    None,
}

impl ParentMode {
    pub const ALL: [ParentMode; 4] =
        [ParentMode::None, ParentMode::MisalignedPrevT, ParentMode::CoarseFinal, ParentMode::TimeAligned];

    pub fn name(self) -> &'static str {
        match self {
            ParentMode::TimeAligned => "time-aligned",
            ParentMode::MisalignedPrevT => "misaligned-prev-t",
            ParentMode::CoarseFinal => "coarse-final",
            ParentMode::None => "none",
        }
    }

    pub fn conditioning(self) -> Conditioning {
        match self {
            ParentMode::None => Conditioning::Univariate,
            _ => Conditioning::Bivariate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Finest scale index `S`. Zero disables the wavelet hierarchy.
    pub levels: usize,
    /// Diffusion horizon `T` the network is trained on.
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub omega: f64,
    pub sigma_kind: SigmaKind,
    pub detail_gain: f64,
    /// Apply `detail_gain` to the training targets only and hand off
    /// `x(s-1)_0` unchanged between scales.
    pub d_train_only: bool,
    pub eta: f64,
    pub parent_mode: ParentMode,
    /// Visit this many evenly spaced timesteps instead of all `T`.
    pub reverse_steps: Option<usize>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            levels: 6,
            timesteps: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
            omega: 0.3,
            sigma_kind: SigmaKind::Posterior,
            detail_gain: 0.8,
            d_train_only: false,
            eta: 0.3,
            parent_mode: ParentMode::TimeAligned,
            reverse_steps: None,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta {} must be >= 0", self.eta)));
        }
        if self.levels > 0 {
            self.wavelet().validate()?;
        }
        if let Some(k) = self.reverse_steps {
            if k < 1 || k > self.timesteps {
                return Err(Error::invalid(format!("reverse_steps {k} must lie in 1..={}", self.timesteps)));
            }
        }
        self.training_schedule().map(|_| ())
    }

    pub fn wavelet(&self) -> WaveletConfig {
        WaveletConfig { levels: self.levels, detail_gain: self.detail_gain }
    }

    /// The full `T`-step schedule used for training.
    pub fn training_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear_with(self.timesteps, self.beta_start, self.beta_end, self.omega, self.sigma_kind)
    }

    /// The schedule the sampler walks, respaced when `reverse_steps` is set.
    pub fn sampling_schedule(&self) -> Result<NoiseSchedule> {
        let full = self.training_schedule()?;
        match self.reverse_steps {
            Some(k) if k != self.timesteps => full.respaced(k),
            _ => Ok(full),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    /// Square crop side in HR pixels.
    pub patch: usize,
    pub lr: f64,
    /// Iterations after which the learning rate is multiplied by `lr_decay`.
    /// `None` places them at 50% and 80% of `iterations`.
    pub lr_milestones: Option<Vec<usize>>,
    pub lr_decay: f64,
    /// Draw the parent's forward noise independently instead of reusing the child's.
    pub independent_parent_noise: bool,
    /// One network per scale instead of a single shared one.
    pub separate_networks: bool,
    pub features: usize,
    pub blocks: usize,
    pub embed_dim: usize,
    pub padding: Padding,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 120_000,
            batch: 16,
            patch: 48,
            lr: 1e-3,
            lr_milestones: None,
            lr_decay: 0.5,
            independent_parent_noise: false,
            separate_networks: false,
            features: 32,
            blocks: 6,
            embed_dim: 64,
            padding: Padding::Zero,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 || self.batch < 1 || self.patch < 1 {
            return Err(Error::invalid("iterations, batch and patch must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid(format!("lr_decay {} must lie in (0, 1]", self.lr_decay)));
        }
        Ok(())
    }

    pub fn milestones(&self) -> Vec<usize> {
        match &self.lr_milestones {
            Some(m) => m.clone(),
            None => vec![self.iterations / 2, self.iterations * 4 / 5],
        }
    }

    /// Learning rate for 0-based iteration `i`.
    pub fn lr_at(&self, i: usize) -> f64 {
        let passed = self.milestones().iter().filter(|&&m| i >= m).count();
        self.lr * self.lr_decay.powi(passed as i32)
    }
}
