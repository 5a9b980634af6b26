//! `markovtyper`: generate data, train, evaluate and merge reports.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, Overrides};

#[derive(Parser)]
#[command(name = "markovtyper", version, about = "RSVP typing: recursive POMDP classifier and Bayesian baseline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Run seed; falls back to MARKOVTYPER_SEED, then 0.
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Any config key, e.g. `--set model.hidden=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic target / non-target response pools.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Class separation in noise standard deviations.
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<String>,
    },
    /// Train a model on a dataset; writes a checkpoint and history.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory or manifest.
        #[arg(long)]
        data: PathBuf,
        /// markovtype | rb1d
        #[arg(long)]
        method: Option<String>,
        /// linear | inv | inv2 | inv3
        #[arg(long)]
        discount: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        epochs: Option<String>,
    },
    /// Run threshold sessions and/or no-threshold sweeps on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint manifest written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset override; defaults to the one the checkpoint was trained on.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        tau: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        trials: Option<String>,
        /// threshold | sweep | both
        #[arg(long)]
        mode: Option<String>,
    },
    /// Merge `session.json` files found under the inputs into report CSVs.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl Common {
    fn overrides(&self, flags: &[(&str, &Option<String>)]) -> Result<Overrides, ConfigError> {
        let mut o = match &self.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        if let Some(seed) = &self.seed {
            o.set("seed", seed);
        }
        for (key, value) in flags {
            if let Some(v) = value {
                o.set(key, v);
            }
        }
        for raw in &self.set {
            o.parse_assignment(raw)?;
        }
        Ok(o)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let env_seed = std::env::var(config::SEED_ENV).ok();
    match cli.command {
        Command::GenData { common, delta } => {
            let o = common.overrides(&[("synth.delta", &delta)])?;
            commands::gen_data(&o, env_seed.as_deref(), &common.out)
        }
        Command::Train {
            common,
            data,
            method,
            discount,
            lambda,
            epochs,
        } => {
            let o = common.overrides(&[
                ("run.method", &method),
                ("train.discount", &discount),
                ("train.lambda", &lambda),
                ("train.epochs", &epochs),
            ])?;
            commands::train(&o, env_seed.as_deref(), &data, &common.out)
        }
        Command::Eval {
            common,
            checkpoint,
            data,
            tau,
            trials,
            mode,
        } => {
            let o = common.overrides(&[
                ("session.tau", &tau),
                ("session.trials", &trials),
                ("eval.mode", &mode),
            ])?;
            commands::eval(&o, &checkpoint, data.as_deref(), &common.out)
        }
        Command::Report { out, inputs } => commands::report(&inputs, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
