//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed check or diverged training, 2 invalid
//! usage or inputs.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CanmError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CANM_THREADS";

#[derive(Parser, Debug)]
#[command(name = "canm", version, about = "Multi-contrast MRI super-resolution toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate low-resolution acquisition by central k-space cropping.
    Degrade(DegradeArgs),
    /// Run the network on a reference / low-resolution pair.
    Forward(ForwardArgs),
    /// Run gradient and oracle verification suites.
    Verify(VerifyArgs),
    /// Fit a fresh network to one synthetic pair.
    Overfit(OverfitArgs),
    /// Dump matching attention of one level and render its argmax offsets.
    Matchviz(MatchvizArgs),
    /// Write freshly initialized weights.
    Init(InitArgs),
    /// Write a synthetic phantom pair.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Network configuration JSON.
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: default (alias full), desk or micro.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Grayscale PNG to degrade.
    #[arg(long = "in", value_name = "PNG")]
    pub input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub scale: u8,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub weights: PathBuf,
    #[arg(long = "ref", value_name = "PNG")]
    pub reference: PathBuf,
    /// Zero-filled low-resolution input at full size.
    #[arg(long = "lr", value_name = "PNG")]
    pub lr: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub out: PathBuf,
    /// Ground truth for PSNR / SSIM.
    #[arg(long, value_name = "PNG")]
    pub target: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = ["grad", "oracle", "all"])]
    pub suite: String,
    /// Override every check's tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Also write the report as JSON.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Args, Debug)]
pub struct OverfitArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Ablation variant applied on top of the config.
    #[arg(long, default_value = "default")]
    pub variant: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub scale: u8,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Reference misalignment `tx,ty,deg`.
    #[arg(long, allow_hyphen_values = true)]
    pub misalign: Option<String>,
    /// Also write the trained weights to `<out>/weights`.
    #[arg(long)]
    pub save_weights: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MatchvizArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_name = "DIR")]
    pub weights: PathBuf,
    #[arg(long = "ref", value_name = "PNG")]
    pub reference: PathBuf,
    #[arg(long = "lr", value_name = "PNG")]
    pub lr: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub level: u8,
    /// Match the raw reference features instead of the AdaIN-aligned ones.
    #[arg(long)]
    pub skip_adain: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = "default")]
    pub variant: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Give the reference branch the degraded branch's encoder weights.
    #[arg(long)]
    pub share_branches: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub scale: u8,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Exit status for a library error.
pub fn exit_code(e: &CanmError) -> u8 {
    match e {
        CanmError::Divergence { .. } | CanmError::NonFinite { .. } | CanmError::DivByZero | CanmError::Gradcheck { .. } => {
            EXIT_FAILED
        }
        _ => EXIT_USAGE,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
