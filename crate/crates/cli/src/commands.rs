use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use atrous_sr::ablation::{desk_image, run_suite, Suite, ABLATION_CSV_HEADER};
use atrous_sr::metrics::{evaluate_with, format_metric};
use atrous_sr::pipeline::{sample, sample_traced, train_with};
use atrous_sr::{load_image, read_checkpoint, save_image, sha256_hex, write_checkpoint, DType, Image, Scalar};
use serde_json::json;

use crate::config::{config_error, RunConfig};

pub const METRICS_CSV_HEADER: &str = "image,reference,psnr,ssim,y_channel,crop_border";

const GIT_HASH: &str = env!("ATROUS_SR_GIT_HASH");

/// Pins the worker count from the config or `ATROUS_SR_THREADS`.
fn init_threads(cfg: &RunConfig) -> Result<()> {
    let from_env = std::env::var("ATROUS_SR_THREADS").ok();
    let n = match (cfg.threads, from_env) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => {
            Some(v.parse().map_err(|_| config_error(format!("ATROUS_SR_THREADS={v:?} is not a thread count")))?)
        }
        (None, None) => None,
    };
    if let Some(n) = n {
        // A pool already exists when several commands run in one process (tests); keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Averages the per-iteration losses into at most 500 points.
fn loss_curve(losses: &[f64]) -> Vec<serde_json::Value> {
    let chunk = losses.len().div_ceil(500).max(1);
    losses
        .chunks(chunk)
        .enumerate()
        .map(|(i, c)| json!({ "iteration": (i * chunk + c.len()), "loss": c.iter().sum::<f64>() / c.len() as f64 }))
        .collect()
}

macro_rules! dispatch {
    ($cfg:expr, $f:ident($($arg:expr),*)) => {
        match $cfg.dtype() {
            DType::F32 => $f::<f32>($($arg),*),
            DType::F64 => $f::<f64>($($arg),*),
        }
    };
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    init_threads(cfg)?;
    dispatch!(cfg, train_typed(cfg))
}

fn train_typed<T: Scalar>(cfg: &RunConfig) -> Result<()> {
    let input = cfg.require(&cfg.input, "input")?;
    let checkpoint = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let y = load_image::<T>(input)?;
    let every = (cfg.train.iterations / 20).max(1);
    let mut progress = |i: usize, loss: f64| {
        if (i + 1).is_multiple_of(every) {
            eprintln!("iteration {}/{}: loss {loss:.5}", i + 1, cfg.train.iterations);
        }
    };
    let report = train_with(&y, &cfg.degradation, &cfg.train, &cfg.sampler, &mut progress)?;
    write_checkpoint(&report.bank, checkpoint)?;
    let manifest = json!({
        "command": "train",
        "version": env!("CARGO_PKG_VERSION"),
        "git_hash": GIT_HASH,
        "seed": cfg.seed,
        "config": cfg,
        "input_sha256": file_hash(input)?,
        "checkpoint_sha256": file_hash(checkpoint)?,
        "iterations": report.losses.len(),
        "loss_curve": loss_curve(&report.losses),
    });
    let path = cfg.manifest.clone().unwrap_or_else(|| with_suffix(checkpoint, ".json"));
    write_text(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    eprintln!("wrote {} and {}", checkpoint.display(), path.display());
    Ok(())
}

pub fn infer(cfg: &RunConfig) -> Result<()> {
    init_threads(cfg)?;
    dispatch!(cfg, infer_typed(cfg))
}

fn metrics_row<T: Scalar>(cfg: &RunConfig, image: &Path, estimate: &Image<T>, truth_path: &Path) -> Result<String> {
    let truth = load_image::<T>(truth_path)?;
    let r = evaluate_with(estimate, &truth, &cfg.metric_options())?;
    Ok(format!(
        "{},{},{},{},{},{}",
        image.display(),
        truth_path.display(),
        format_metric(r.psnr),
        format_metric(r.ssim),
        cfg.y_channel,
        cfg.crop_border
    ))
}

fn emit_csv(path: Option<&Path>, header: &str, rows: &[String]) -> Result<()> {
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    match path {
        Some(p) => write_text(p, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn infer_typed<T: Scalar>(cfg: &RunConfig) -> Result<()> {
    let input = cfg.require(&cfg.input, "input")?;
    let checkpoint = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let output = cfg.require(&cfg.output, "output")?;
    let bank = read_checkpoint::<T>(checkpoint)?;
    let y = load_image::<T>(input)?;
    let x = match &cfg.trace {
        Some(trace_path) => {
            let (x, trace) = sample_traced(&y, &bank, &cfg.sampler, &cfg.degradation)?;
            write_text(trace_path, &trace.manifest())?;
            x
        }
        None => sample(&y, &bank, &cfg.sampler, &cfg.degradation)?,
    };
    save_image(&x, output)?;
    eprintln!("wrote {} ({}x{})", output.display(), x.height(), x.width());
    if let Some(gt) = &cfg.ground_truth {
        let row = metrics_row(cfg, output, &x, gt)?;
        emit_csv(cfg.metrics_csv.as_deref(), METRICS_CSV_HEADER, &[row])?;
    }
    if let Some(path) = &cfg.manifest {
        let manifest = json!({
            "command": "infer",
            "version": env!("CARGO_PKG_VERSION"),
            "git_hash": GIT_HASH,
            "seed": cfg.seed,
            "config": cfg,
            "input_sha256": file_hash(input)?,
            "checkpoint_sha256": file_hash(checkpoint)?,
            "output_sha256": file_hash(output)?,
        });
        write_text(path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    dispatch!(cfg, eval_typed(cfg))
}

fn eval_typed<T: Scalar>(cfg: &RunConfig) -> Result<()> {
    let input = cfg.require(&cfg.input, "input")?;
    let truth = cfg.require(&cfg.ground_truth, "ground_truth")?;
    let estimate = load_image::<T>(input)?;
    let row = metrics_row(cfg, input, &estimate, truth)?;
    emit_csv(cfg.output.as_deref(), METRICS_CSV_HEADER, &[row])
}

pub fn ablate(cfg: &RunConfig, suite: &str, synthetic: Option<usize>) -> Result<()> {
    init_threads(cfg)?;
    let suite = Suite::from_name(suite).map_err(|e| config_error(e.to_string()))?;
    dispatch!(cfg, ablate_typed(cfg, suite, synthetic))
}

fn ablate_typed<T: Scalar>(cfg: &RunConfig, suite: Suite, synthetic: Option<usize>) -> Result<()> {
    let gt: Image<T> = match (synthetic, &cfg.ground_truth) {
        (Some(n), _) => desk_image(n),
        (None, Some(p)) => load_image(p)?,
        (None, None) => return Err(config_error("missing required key `ground_truth` (or pass --synthetic N)")),
    };
    let mut progress = |row: &atrous_sr::ablation::AblationRow| {
        eprintln!("{}: psnr {} ssim {}", row.cell, format_metric(row.psnr), format_metric(row.ssim));
    };
    let rows = run_suite(suite, &gt, &cfg.degradation, &cfg.train, &cfg.sampler, &cfg.metric_options(), &mut progress)?;
    let lines: Vec<String> = rows.iter().map(|r| r.csv()).collect();
    emit_csv(cfg.output.as_deref(), ABLATION_CSV_HEADER, &lines)
}
