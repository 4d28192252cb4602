//! Desk-scale ablation grids.
//!
//! Each suite expands a base configuration into cells, trains (reusing a
//! network whenever two cells train identically) and scores the sampler
//! output against the ground truth.

use std::fmt::Write as _;

use crate::degradation::{degrade_noisy, DegradationModel};
use crate::denoiser::DenoiserBank;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{evaluate_with, format_metric, MetricOptions};
use crate::pipeline::{hr_reference, sample, train, ParentMode, SamplerConfig, TrainConfig};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    CoreComponents,
    ParentChoice,
    EtaSweep,
    OmegaDSweep,
    Levels,
    ReverseSteps,
    SharedVsSeparate,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::CoreComponents,
        Suite::ParentChoice,
        Suite::EtaSweep,
        Suite::OmegaDSweep,
        Suite::Levels,
        Suite::ReverseSteps,
        Suite::SharedVsSeparate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::CoreComponents => "core-components",
            Suite::ParentChoice => "parent-choice",
            Suite::EtaSweep => "eta-sweep",
            Suite::OmegaDSweep => "omega-d-sweep",
            Suite::Levels => "levels",
            Suite::ReverseSteps => "reverse-steps",
            Suite::SharedVsSeparate => "shared-vs-separate",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| {
            let known: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
            Error::invalid(format!("unknown suite {name:?}; expected one of {}", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub label: String,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
}

/// Expands `suite` around the base configuration.
pub fn suite_cells(suite: Suite, train: &TrainConfig, sampler: &SamplerConfig) -> Vec<AblationCell> {
    let cell = |label: String, t: TrainConfig, s: SamplerConfig| AblationCell { label, train: t, sampler: s };
    let base = |f: &dyn Fn(&mut SamplerConfig)| {
        let mut s = sampler.clone();
        f(&mut s);
        s
    };
    match suite {
        Suite::CoreComponents => vec![
            cell(
                "lr-consistency-only".into(),
                train.clone(),
                base(&|s| {
                    s.levels = 0;
                    s.parent_mode = ParentMode::None;
                }),
            ),
            cell("atrous".into(), train.clone(), base(&|s| s.parent_mode = ParentMode::None)),
            cell("atrous-bivariate".into(), train.clone(), base(&|s| s.parent_mode = ParentMode::TimeAligned)),
        ],
        Suite::ParentChoice => ParentMode::ALL
            .iter()
            .map(|&m| cell(m.name().into(), train.clone(), base(&|s| s.parent_mode = m)))
            .collect(),
        Suite::EtaSweep => [0.1, 0.3, 0.5]
            .iter()
            .map(|&eta| cell(format!("eta={eta}"), train.clone(), base(&|s| s.eta = eta)))
            .collect(),
        Suite::OmegaDSweep => {
            let mut cells = Vec::new();
            // The T row is read as a training budget relative to 120.
            for budget in [30, 80, 100, 120] {
                let t = TrainConfig { iterations: (train.iterations * budget / 120).max(1), ..train.clone() };
                let s = base(&|s| {
                    s.omega = 0.3;
                    s.detail_gain = 0.8;
                });
                cells.push(cell(format!("budget={budget}"), t, s));
            }
            for omega in [0.3, 0.5, 1.0, 2.0] {
                let s = base(&|s| {
                    s.omega = omega;
                    s.detail_gain = 0.8;
                });
                cells.push(cell(format!("omega={omega}"), train.clone(), s));
            }
            for d in [0.5, 0.8, 1.0, 1.5] {
                let s = base(&|s| {
                    s.omega = 0.3;
                    s.detail_gain = d;
                });
                cells.push(cell(format!("d={d}"), train.clone(), s));
            }
            cells
        }
        Suite::Levels => (4..=7).map(|lv| cell(format!("S={lv}"), train.clone(), base(&|s| s.levels = lv))).collect(),
        Suite::ReverseSteps => reverse_step_counts(sampler.timesteps)
            .into_iter()
            .map(|k| cell(format!("steps={k}"), train.clone(), base(&|s| s.reverse_steps = Some(k))))
            .collect(),
        Suite::SharedVsSeparate => [false, true]
            .iter()
            .map(|&sep| {
                let t = TrainConfig { separate_networks: sep, ..train.clone() };
                cell(if sep { "separate" } else { "shared" }.into(), t, sampler.clone())
            })
            .collect(),
    }
}

/// `{50, 75, 100}` when `T = 100`; the same fractions of `T` otherwise.
pub fn reverse_step_counts(timesteps: usize) -> Vec<usize> {
    if timesteps == 100 {
        return vec![50, 75, 100];
    }
    let mut out: Vec<usize> =
        [0.5, 0.75, 1.0].iter().map(|f| ((f * timesteps as f64).round() as usize).clamp(1, timesteps)).collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub suite: String,
    pub cell: String,
    pub levels: usize,
    pub timesteps: usize,
    pub reverse_steps: usize,
    pub iterations: usize,
    pub omega: f64,
    pub detail_gain: f64,
    pub eta: f64,
    pub parent_mode: ParentMode,
    pub networks: usize,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub bicubic_psnr: f64,
    pub bicubic_ssim: f64,
}

pub const ABLATION_CSV_HEADER: &str = "suite,cell,levels,timesteps,reverse_steps,iterations,omega,detail_gain,eta,\
parent_mode,networks,seed,psnr,ssim,bicubic_psnr,bicubic_ssim";

impl AblationRow {
    pub fn csv(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.suite,
            self.cell,
            self.levels,
            self.timesteps,
            self.reverse_steps,
            self.iterations,
            self.omega,
            self.detail_gain,
            self.eta,
            self.parent_mode.name(),
            self.networks,
            self.seed,
            format_metric(self.psnr),
            format_metric(self.ssim),
            format_metric(self.bicubic_psnr),
            format_metric(self.bicubic_ssim),
        );
        s
    }
}

/// 64x64-style test pattern: an 8-pixel checkerboard plus diagonal stripes of period 8.
pub fn desk_image<T: Scalar>(size: usize) -> Image<T> {
    Image::from_fn(size, size, 1, |_, y, x| {
        let checker = if (x / 8 + y / 8) % 2 == 0 { 0.5 } else { 0.0 };
        let stripe = if ((x + y) / 4) % 2 == 0 { 0.3 } else { 0.0 };
        T::c(0.1 + checker + stripe)
    })
}

/// Small single-core setting used by the synthetic regression: 64x64 pattern,
/// x2 bicubic, S = 3, T = 25, 2000 iterations of a 16-feature, one-block network.
/// The LR step is near the `1 / (2 ||D||^2)` bound and the parent gets its own noise.
pub fn desk_configs(seed: u64) -> (TrainConfig, SamplerConfig) {
    let train = TrainConfig {
        iterations: 2000,
        batch: 8,
        patch: 24,
        features: 16,
        blocks: 1,
        embed_dim: 16,
        independent_parent_noise: true,
        seed,
        ..TrainConfig::default()
    };
    let sampler = SamplerConfig { levels: 3, timesteps: 25, beta_end: 0.1, eta: 2.0, seed, ..SamplerConfig::default() };
    (train, sampler)
}

/// Observation `D(gt) + n` with the noise drawn from the synthesis stream.
pub fn synthesize_lr<T: Scalar>(gt: &Image<T>, model: &DegradationModel, seed: u64) -> Result<Image<T>> {
    let (lh, lw) = model.lr_dims(gt.height(), gt.width());
    if model.hr_dims(lh, lw) != (gt.height(), gt.width()) {
        return Err(Error::invalid(format!(
            "ground truth {} is not an exact x{} multiple of any LR size",
            gt.shape(),
            model.scale_factor
        )));
    }
    degrade_noisy(gt, model, &mut stream_rng(seed, Stream::NoiseSynthesis))
}

fn training_key(cell: &AblationCell) -> String {
    let s = &cell.sampler;
    format!(
        "{:?}|{}|{}|{}|{}|{}|{:?}",
        cell.train,
        s.levels,
        s.timesteps,
        s.beta_start,
        s.beta_end,
        s.detail_gain,
        s.parent_mode.conditioning()
    )
}

/// Trains on demand and reuses networks across cells with identical training inputs.
#[derive(Default)]
pub struct TrainingCache<T> {
    entries: Vec<(String, DenoiserBank<T>)>,
}

impl<T: Scalar> TrainingCache<T> {
    pub fn new() -> Self {
        TrainingCache { entries: Vec::new() }
    }

    pub fn get(&mut self, y: &Image<T>, model: &DegradationModel, cell: &AblationCell) -> Result<&DenoiserBank<T>> {
        let key = training_key(cell);
        let idx = match self.entries.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let report = train(y, model, &cell.train, &cell.sampler)?;
                self.entries.push((key, report.bank));
                self.entries.len() - 1
            }
        };
        Ok(&self.entries[idx].1)
    }
}

/// Trains (or reuses), samples and scores one cell.
pub fn run_cell<T: Scalar>(
    suite: Suite,
    gt: &Image<T>,
    y: &Image<T>,
    model: &DegradationModel,
    cell: &AblationCell,
    opts: &MetricOptions,
    cache: &mut TrainingCache<T>,
) -> Result<AblationRow> {
    let bank = cache.get(y, model, cell)?;
    let networks = bank.networks.len();
    let x = sample(y, bank, &cell.sampler, model)?;
    let report = evaluate_with(&x, gt, opts)?;
    let bicubic = evaluate_with(&hr_reference(y, model)?.clamp01(), gt, opts)?;
    let s = &cell.sampler;
    Ok(AblationRow {
        suite: suite.name().into(),
        cell: cell.label.clone(),
        levels: s.levels,
        timesteps: s.timesteps,
        reverse_steps: s.reverse_steps.unwrap_or(s.timesteps),
        iterations: cell.train.iterations,
        omega: s.omega,
        detail_gain: s.detail_gain,
        eta: s.eta,
        parent_mode: s.parent_mode,
        networks,
        seed: cell.train.seed,
        psnr: report.psnr,
        ssim: report.ssim,
        bicubic_psnr: bicubic.psnr,
        bicubic_ssim: bicubic.ssim,
    })
}

/// Runs every cell of `suite`, calling `on_row` as each finishes.
#[allow(clippy::too_many_arguments)]
pub fn run_suite<T: Scalar>(
    suite: Suite,
    gt: &Image<T>,
    model: &DegradationModel,
    train: &TrainConfig,
    sampler: &SamplerConfig,
    opts: &MetricOptions,
    on_row: &mut dyn FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let y = synthesize_lr(gt, model, sampler.seed)?;
    let mut cache = TrainingCache::new();
    let mut rows = Vec::new();
    for cell in suite_cells(suite, train, sampler) {
        let row = run_cell(suite, gt, &y, model, &cell, opts, &mut cache)?;
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}
