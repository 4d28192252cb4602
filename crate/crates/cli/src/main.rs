mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, ConfigLayer};

/// Single-image super-resolution with wavelet-pyramid diffusion.
#[derive(Debug, Parser)]
#[command(name = "atrous-sr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a denoiser on one LR image and write a checkpoint
    Train(CommonArgs),
    /// Super-resolve an LR image with a trained checkpoint
    Infer(CommonArgs),
    /// Score an image against a ground truth (PSNR, SSIM)
    Eval(CommonArgs),
    /// Run an ablation grid on a ground-truth HR image
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Flat TOML config; flags override its values
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    layer: ConfigLayer,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// core-components, parent-choice, eta-sweep, omega-d-sweep, levels, reverse-steps or shared-vs-separate
    #[arg(long)]
    suite: String,
    /// Use the built-in checkerboard-and-stripes pattern of this size as ground truth
    #[arg(long)]
    synthetic: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<atrous_sr::Error>() {
            if e.is_numeric() {
                return 3;
            }
            if matches!(e, atrous_sr::Error::InvalidParameter(_)) {
                return 2;
            }
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => commands::train(&config::build(a.config.as_deref(), &a.layer)?),
        Command::Infer(a) => commands::infer(&config::build(a.config.as_deref(), &a.layer)?),
        Command::Eval(a) => commands::eval(&config::build(a.config.as_deref(), &a.layer)?),
        Command::Ablate(a) => {
            let cfg = config::build(a.common.config.as_deref(), &a.common.layer)?;
            commands::ablate(&cfg, &a.suite, a.synthetic)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
