//! Layered run configuration: command-line flags over a flat TOML file over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use atrous_sr::degradation::{DegradationMode, DegradationModel};
use atrous_sr::diffusion::SigmaKind;
use atrous_sr::metrics::MetricOptions;
use atrous_sr::pipeline::{ParentMode, SamplerConfig, TrainConfig};
use atrous_sr::{DType, Padding};
use clap::Args;
use serde::{Deserialize, Serialize};

/// A user-facing configuration mistake; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Every key is optional so that flags and files can be overlaid.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    /// Input image (LR observation; the estimate for `eval`)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output image (`infer`) or CSV (`eval`, `ablate`)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Checkpoint written by `train` and read by `infer`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Ground-truth HR image
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// JSON run manifest path
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Metrics CSV written by `infer` when a ground truth is given
    #[arg(long)]
    pub metrics_csv: Option<PathBuf>,
    /// Per-(scale, step) state hash manifest written by `infer`
    #[arg(long)]
    pub trace: Option<PathBuf>,

    #[arg(long)]
    pub scale_factor: Option<f64>,
    /// bicubic-downsample or gaussian-blur-then-subsample
    #[arg(long)]
    pub degradation: Option<String>,
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,

    /// Wavelet levels S (0 disables the hierarchy)
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub detail_gain: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub d_train_only: Option<bool>,

    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// posterior or beta
    #[arg(long)]
    pub sigma_kind: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// time-aligned, misaligned-prev-t, coarse-final or none
    #[arg(long)]
    pub parent_mode: Option<String>,
    #[arg(long)]
    pub reverse_steps: Option<usize>,

    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lr_milestones: Option<Vec<usize>>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub independent_parent_noise: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub separate_networks: Option<bool>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// zero or periodic
    #[arg(long)]
    pub padding: Option<String>,

    #[arg(long)]
    pub seed: Option<u64>,
    /// f32 or f64
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub y_channel: Option<bool>,
    #[arg(long)]
    pub crop_border: Option<usize>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),* $(,)?) => {
        ConfigLayer { $($f: $hi.$f.clone().or_else(|| $lo.$f.clone()),)* }
    };
}

impl ConfigLayer {
    /// Fields set in `self` win over `lower`.
    pub fn over(&self, lower: &ConfigLayer) -> ConfigLayer {
        overlay!(
            self,
            lower,
            input,
            output,
            checkpoint,
            ground_truth,
            manifest,
            metrics_csv,
            trace,
            scale_factor,
            degradation,
            blur_sigma,
            noise_sigma,
            levels,
            detail_gain,
            d_train_only,
            timesteps,
            beta_start,
            beta_end,
            omega,
            sigma_kind,
            eta,
            parent_mode,
            reverse_steps,
            iterations,
            batch,
            patch,
            lr,
            lr_milestones,
            lr_decay,
            independent_parent_noise,
            separate_networks,
            features,
            blocks,
            embed_dim,
            padding,
            seed,
            precision,
            threads,
            y_channel,
            crop_border,
        )
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<ConfigLayer> {
        toml::from_str(text).map_err(|e| config_error(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<ConfigLayer> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path)
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub metrics_csv: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub degradation: DegradationModel,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub precision: String,
    pub threads: Option<usize>,
    pub y_channel: bool,
    pub crop_border: usize,
}

fn parse_enum<T: for<'de> Deserialize<'de>>(key: &str, value: &str) -> Result<T> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(value))
        .map_err(|_| config_error(format!("invalid value {value:?} for `{key}`")))
}

impl RunConfig {
    pub fn resolve(layer: &ConfigLayer) -> Result<RunConfig> {
        let d = SamplerConfig::default();
        let seed = layer.seed.unwrap_or(0);
        let mode: DegradationMode = match &layer.degradation {
            Some(v) => parse_enum("degradation", v)?,
            None => DegradationMode::default(),
        };
        let degradation = DegradationModel {
            scale_factor: layer.scale_factor.unwrap_or(4.0),
            mode,
            blur_sigma: layer.blur_sigma.unwrap_or(if mode == DegradationMode::GaussianBlurThenSubsample {
                1.0
            } else {
                0.0
            }),
            noise_sigma: layer.noise_sigma.unwrap_or(0.0),
        };
        let sampler = SamplerConfig {
            levels: layer.levels.unwrap_or(d.levels),
            timesteps: layer.timesteps.unwrap_or(d.timesteps),
            beta_start: layer.beta_start.unwrap_or(d.beta_start),
            beta_end: layer.beta_end.unwrap_or(d.beta_end),
            omega: layer.omega.unwrap_or(d.omega),
            sigma_kind: match &layer.sigma_kind {
                Some(v) => parse_enum::<SigmaKind>("sigma_kind", v)?,
                None => d.sigma_kind,
            },
            detail_gain: layer.detail_gain.unwrap_or(d.detail_gain),
            d_train_only: layer.d_train_only.unwrap_or(false),
            eta: layer.eta.unwrap_or(d.eta),
            parent_mode: match &layer.parent_mode {
                Some(v) => parse_enum::<ParentMode>("parent_mode", v)?,
                None => d.parent_mode,
            },
            reverse_steps: layer.reverse_steps,
            seed,
        };
        let t = TrainConfig::default();
        let train = TrainConfig {
            iterations: layer.iterations.unwrap_or(t.iterations),
            batch: layer.batch.unwrap_or(t.batch),
            patch: layer.patch.unwrap_or(t.patch),
            lr: layer.lr.unwrap_or(t.lr),
            lr_milestones: layer.lr_milestones.clone(),
            lr_decay: layer.lr_decay.unwrap_or(t.lr_decay),
            independent_parent_noise: layer.independent_parent_noise.unwrap_or(false),
            separate_networks: layer.separate_networks.unwrap_or(false),
            features: layer.features.unwrap_or(t.features),
            blocks: layer.blocks.unwrap_or(t.blocks),
            embed_dim: layer.embed_dim.unwrap_or(t.embed_dim),
            padding: match &layer.padding {
                Some(v) => parse_enum::<Padding>("padding", v)?,
                None => t.padding,
            },
            seed,
        };
        let precision = layer.precision.clone().unwrap_or_else(|| "f32".into());
        if precision != "f32" && precision != "f64" {
            return Err(config_error(format!("invalid value {precision:?} for `precision`; use f32 or f64")));
        }
        degradation.validate().map_err(|e| config_error(e.to_string()))?;
        sampler.validate().map_err(|e| config_error(e.to_string()))?;
        train.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(RunConfig {
            input: layer.input.clone(),
            output: layer.output.clone(),
            checkpoint: layer.checkpoint.clone(),
            ground_truth: layer.ground_truth.clone(),
            manifest: layer.manifest.clone(),
            metrics_csv: layer.metrics_csv.clone(),
            trace: layer.trace.clone(),
            degradation,
            sampler,
            train,
            seed,
            precision,
            threads: layer.threads,
            y_channel: layer.y_channel.unwrap_or(false),
            crop_border: layer.crop_border.unwrap_or(0),
        })
    }

    pub fn dtype(&self) -> DType {
        if self.precision == "f64" {
            DType::F64
        } else {
            DType::F32
        }
    }

    pub fn metric_options(&self) -> MetricOptions {
        MetricOptions { y_channel: self.y_channel, crop_border: self.crop_border }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
        value.as_ref().ok_or_else(|| config_error(format!("missing required key `{key}`")))
    }
}

/// Merges an optional config file under the command-line layer and resolves defaults.
pub fn build(file: Option<&Path>, flags: &ConfigLayer) -> Result<RunConfig> {
    let base = match file {
        Some(p) => ConfigLayer::load(p)?,
        None => ConfigLayer::default(),
    };
    RunConfig::resolve(&flags.over(&base))
}
