//! Shared noise-prediction network.
//!
//! Topology, for `C` image channels and `F` features:
//!
//! ```text
//! [x_t | parent]  (2C channels, zero parent block when unconditioned)
//!   -> conv3x3 (2C -> F) + W_e (sinusoid(t) + e(s)) + b_e
//!   -> residual blocks: h + conv3x3(silu(conv3x3(silu(h))))
//!   -> conv3x3 (F -> C) of silu(h)
//! ```
//!
//! All weights live in one flat vector; [`ParamLayout`] names the slices.

mod adam;
mod checkpoint;
mod conv;
mod network;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, peek_dtype, read_checkpoint, write_checkpoint, DenoiserBank,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use conv::Padding;
pub use network::{loss_and_grad, predict_noise, timestep_embedding, TrainingExample};

/// Whether the network receives the coarser-scale state as extra input channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// Parent state required for `s >= 1`.
    #[default]
    Bivariate,
    /// Parent channels are always zero.
    Univariate,
}

impl Conditioning {
    pub fn code(self) -> u8 {
        match self {
            Conditioning::Univariate => 0,
            Conditioning::Bivariate => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Conditioning::Univariate),
            1 => Some(Conditioning::Bivariate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    /// Image channels `C`.
    pub channels: usize,
    /// Feature width `F`.
    pub features: usize,
    pub blocks: usize,
    /// Embedding width `E`; must be even.
    pub embed_dim: usize,
    /// Finest scale index `S`; the scale table has `S + 1` rows.
    pub levels: usize,
    /// Training horizon `T` used to normalize the time embedding.
    pub timesteps: usize,
    pub conditioning: Conditioning,
    pub padding: Padding,
}

impl DenoiserConfig {
    pub fn new(channels: usize, levels: usize, timesteps: usize) -> Self {
        DenoiserConfig {
            channels,
            features: 32,
            blocks: 6,
            embed_dim: 64,
            levels,
            timesteps,
            conditioning: Conditioning::Bivariate,
            padding: Padding::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.features == 0 || self.timesteps == 0 {
            return Err(Error::invalid("denoiser channels, features and timesteps must be positive"));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::invalid(format!("embedding width {} must be even and positive", self.embed_dim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of every named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &DenoiserConfig) -> Self {
        let (c, f, e) = (cfg.channels, cfg.features, cfg.embed_dim);
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let spec = TensorSpec { name, shape, offset: total };
            total += spec.len();
            tensors.push(spec);
        };
        push("conv_in.weight".into(), vec![f, 2 * c, 3, 3]);
        push("conv_in.bias".into(), vec![f]);
        push("embed.weight".into(), vec![f, e]);
        push("embed.bias".into(), vec![f]);
        push("scale_embedding".into(), vec![cfg.levels + 1, e]);
        for b in 0..cfg.blocks {
            push(format!("block{b}.conv1.weight"), vec![f, f, 3, 3]);
            push(format!("block{b}.conv1.bias"), vec![f]);
            push(format!("block{b}.conv2.weight"), vec![f, f, 3, 3]);
            push(format!("block{b}.conv2.bias"), vec![f]);
        }
        push("conv_out.weight".into(), vec![c, f, 3, 3]);
        push("conv_out.bias".into(), vec![c]);
        ParamLayout { tensors, total }
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub(crate) fn range(&self, name: &str) -> std::ops::Range<usize> {
        self.get(name).unwrap_or_else(|| panic!("no tensor named {name}")).range()
    }
}

/// Trainable weights of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams<T> {
    config: DenoiserConfig,
    layout: ParamLayout,
    values: Vec<T>,
}

impl<T: Scalar> DenoiserParams<T> {
    pub fn zeros(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let values = vec![T::zero(); layout.total];
        Ok(DenoiserParams { config, layout, values })
    }

    /// Fan-in scaled uniform weights, zero biases, `N(0, 0.25)` scale
    /// embeddings and an all-zero output layer.
    pub fn init<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let specs = p.layout.tensors.clone();
        for spec in &specs {
            let slice = &mut p.values[spec.range()];
            if spec.name == "scale_embedding" {
                for v in slice.iter_mut() {
                    *v = T::c(0.5) * crate::rng::normal::<T, R>(rng);
                }
            } else if spec.name.ends_with(".weight") && !spec.name.starts_with("conv_out") {
                let fan_in: usize = spec.shape[1..].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in slice.iter_mut() {
                    *v = T::c(rng.random_range(-bound..bound));
                }
            }
        }
        Ok(p)
    }

    pub fn from_values(config: DenoiserConfig, values: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if values.len() != layout.total {
            return Err(Error::Checkpoint(format!("expected {} parameters, got {}", layout.total, values.len())));
        }
        Ok(DenoiserParams { config, layout, values })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> &[T] {
        &self.values[self.layout.range(name)]
    }

    pub fn tensor_mut(&mut self, name: &str) -> &mut [T] {
        let r = self.layout.range(name);
        &mut self.values[r]
    }

    pub fn cast<U: Scalar>(&self) -> DenoiserParams<U> {
        DenoiserParams {
            config: self.config,
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| U::c(v.as_f64())).collect(),
        }
    }
}

/// Arguments of one noise prediction.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserInput<'a, T> {
    pub x_t: &'a Image<T>,
    pub parent: Option<&'a Image<T>>,
    pub t: usize,
    pub scale: usize,
}
