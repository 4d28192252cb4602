//! Single-image super-resolution by coarse-to-fine diffusion over an
//! undecimated (à trous) wavelet pyramid.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common concrete instantiations.

pub mod ablation;
pub mod degradation;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod resample;
pub mod rng;
pub mod scalar;
pub mod wavelet;

pub use degradation::{degrade, degrade_adjoint, degrade_noisy, DegradationMode, DegradationModel};
pub use denoiser::{
    read_checkpoint, write_checkpoint, Conditioning, DenoiserBank, DenoiserConfig, DenoiserInput, DenoiserParams,
    Padding,
};
pub use diffusion::{NoiseSchedule, SigmaKind};
pub use error::{Error, Result};
pub use image::{load_image, save_image, sha256_hex, Image, Shape};
pub use metrics::{evaluate, evaluate_with, psnr, ssim, MetricOptions, MetricReport};
pub use pipeline::{sample, sample_traced, train, ParentMode, SamplerConfig, TrainConfig};
pub use rng::{stream_rng, SeededRng, Stream};
pub use scalar::{DType, Scalar};
pub use wavelet::{atrous_decompose, partial_targets, reconstruct, AtrousPyramid, WaveletConfig};

pub type ImageF32 = Image<f32>;
pub type ImageF64 = Image<f64>;
pub type ParamsF32 = DenoiserParams<f32>;
pub type ParamsF64 = DenoiserParams<f64>;
pub type BankF32 = DenoiserBank<f32>;
pub type BankF64 = DenoiserBank<f64>;
