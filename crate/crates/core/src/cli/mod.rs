//! The `vlac` command line: `synth`, `train`, `eval`, `generate` and `selfcheck`.
//!
//! Settings come from built-in defaults, then the `--config` file, then the
//! `VLAC_PRECISION` environment variable, then `--set key=value` and the
//! dedicated flags. Exit status is 0 on success, 1 for usage and configuration
//! errors, and 2 for runtime or numerical failures.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use commands::{cmd_eval, cmd_generate, cmd_selfcheck, cmd_synth, cmd_train};
pub use config::{GenerateMode, RunConfig, KEYS};

pub const PRECISION_ENV: &str = "VLAC_PRECISION";

#[derive(Debug, Parser)]
#[command(name = "vlac", version, about = "Variational ladder autoencoders with per-layer clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset and a preview sheet.
    Synth(RunArgs),
    /// Train a model and write checkpoints and logs to a run directory.
    Train(RunArgs),
    /// Cluster a dataset with one layer of a checkpoint and score it.
    Eval(RunArgs),
    /// Write a generation grid for one layer of a checkpoint.
    Generate(RunArgs),
    /// Run the built-in numerical checks.
    Selfcheck(SelfcheckArgs),
}

#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// Run configuration file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// vlac-kone, vlac-ktwo, gm-dgm, vlae or custom.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// 1-based latent layer.
    #[arg(long, value_name = "N")]
    pub layer: Option<usize>,
    /// Generation protocol: conditional or marginal.
    #[arg(long, value_name = "NAME")]
    pub mode: Option<String>,
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,
    /// Checkpoint manifest to evaluate, sample from, or resume.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Any configuration key, e.g. `--set n=1000`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Debug, Default, Args)]
pub struct SelfcheckArgs {
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    /// Also write the report to this directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "OP", hide = true)]
    pub inject_fault: Option<String>,
}

impl RunArgs {
    /// Layers defaults, the config file, the environment and the flags.
    pub fn resolve(&self, precision_env: Option<&str>) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            config.apply_text(&text)?;
        }
        if let Some(p) = precision_env.filter(|p| !p.is_empty()) {
            config
                .set("precision", p)
                .map_err(|_| Error::Config(format!("{PRECISION_ENV} must be f32 or f64, got `{p}`")))?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            config.set(k.trim(), v)?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("preset", self.preset.clone()),
            ("layer", self.layer.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("steps", self.steps.map(|v| v.to_string())),
            ("checkpoint", self.checkpoint.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, &v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (including the program name), runs the command, and reports
/// the outcome on standard output/error.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            return ExitCode::from(code);
        }
    };
    let env = std::env::var(PRECISION_ENV).ok();
    let outcome = match &cli.command {
        Command::Synth(a) => a.resolve(env.as_deref()).and_then(|c| cmd_synth(&c, a.out.as_deref())),
        Command::Train(a) => a.resolve(env.as_deref()).and_then(|c| cmd_train(&c, a.out.as_deref())),
        Command::Eval(a) => a.resolve(env.as_deref()).and_then(|c| cmd_eval(&c, a.out.as_deref())),
        Command::Generate(a) => a.resolve(env.as_deref()).and_then(|c| cmd_generate(&c, a.out.as_deref())),
        Command::Selfcheck(a) => cmd_selfcheck(a),
    };
    match outcome {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn main() -> ExitCode {
    run(std::env::args_os())
}
