//! `byzsim`: command-line front end for the Byzantine-robust FL simulator.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Settings;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad option, config entry, or unknown attack/defense name.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Output(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Run(_) => 1,
            Self::Usage(_) => 2,
            Self::Output(_) => 3,
        }
    }
}

impl From<byzsim_core::Error> for CliError {
    fn from(e: byzsim_core::Error) -> Self {
        match e {
            byzsim_core::Error::InvalidArgument(m) => Self::Usage(m),
            other => Self::Run(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "byzsim", version, about = "Byzantine-robust federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Byzantine tolerant rate of defenses on the one-dimensional toy scenarios.
    Btr(Flags),
    /// Federated training of a softmax classifier under attack.
    Train(Flags),
    /// Spectrum and scale selection on a planted cohort.
    Spectrum(Flags),
}

/// Every flag is also a config key (its long name); subcommands reject keys
/// they do not use.
#[derive(Args, Debug, Default)]
struct Flags {
    /// Flat `key = value` file, or a previous output file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; stdout when absent or `-`.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Where `train` writes its JSON summary in csv mode.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Master seed; falls back to BYZSIM_SEED, then 0.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    clients: Option<String>,
    #[arg(long)]
    attackers: Option<String>,
    #[arg(long)]
    attack: Option<String>,
    /// A defense name; `btr` takes a comma-separated list.
    #[arg(long)]
    defense: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    /// Kernel scale grid as min:max:ratio.
    #[arg(long = "sigma-grid")]
    sigma_grid: Option<String>,
    /// Dirichlet concentration for non-IID shards, or `iid`.
    #[arg(long)]
    beta: Option<String>,
    /// Fraction trimmed from each end by trimmed_mean.
    #[arg(long)]
    trim: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Comma-separated toy scenarios (S1, S2-s, S2-m, S3, S4).
    #[arg(long)]
    scenarios: Option<String>,
    /// How the toy distributions' second parameter is read: std or var.
    #[arg(long)]
    spread: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    /// sgd or adam.
    #[arg(long)]
    optimizer: Option<String>,
    /// `synthetic` or `mnist:<dir>`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long = "test-samples")]
    test_samples: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    separation: Option<String>,
    /// Planted attack case: non_collusion, collusion_diff, mimic or mixture.
    #[arg(long)]
    case: Option<String>,
    /// Benign per-coordinate standard deviation of a planted cohort.
    #[arg(long)]
    kappa: Option<String>,
    /// Distance of the planted colluding group per coordinate.
    #[arg(long)]
    offset: Option<String>,
}

impl Flags {
    fn settings(&self) -> Settings {
        let pairs = [
            ("format", &self.format),
            ("seed", &self.seed),
            ("clients", &self.clients),
            ("attackers", &self.attackers),
            ("attack", &self.attack),
            ("defense", &self.defense),
            ("rounds", &self.rounds),
            ("sigma-grid", &self.sigma_grid),
            ("beta", &self.beta),
            ("trim", &self.trim),
            ("trials", &self.trials),
            ("scenarios", &self.scenarios),
            ("spread", &self.spread),
            ("lr", &self.lr),
            ("batch", &self.batch),
            ("optimizer", &self.optimizer),
            ("dataset", &self.dataset),
            ("samples", &self.samples),
            ("test-samples", &self.test_samples),
            ("dim", &self.dim),
            ("classes", &self.classes),
            ("separation", &self.separation),
            ("case", &self.case),
            ("kappa", &self.kappa),
            ("offset", &self.offset),
        ];
        let mut s = Settings::default();
        for (k, v) in pairs {
            if let Some(v) = v {
                s.set(k, v.as_str());
            }
        }
        s
    }

    /// Defaults, then the config file, then flags.
    fn resolve(&self, defaults: &[(&str, &str)]) -> Result<Settings, CliError> {
        let mut s = Settings::with_defaults(defaults);
        if let Ok(seed) = std::env::var("BYZSIM_SEED") {
            s.set("seed", seed);
        }
        if let Some(path) = &self.config {
            s.merge(&Settings::from_file(path)?, &format!("config {}", path.display()))?;
        }
        s.merge(&self.settings(), "flags")?;
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Btr(f) => {
            let s = f.resolve(commands::BTR_DEFAULTS)?;
            commands::btr(&s, f.output.as_deref())
        }
        Command::Train(f) => {
            let s = f.resolve(commands::TRAIN_DEFAULTS)?;
            commands::train(&s, f.output.as_deref(), f.summary.as_deref())
        }
        Command::Spectrum(f) => {
            let s = f.resolve(commands::SPECTRUM_DEFAULTS)?;
            commands::spectrum(&s, f.output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("byzsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
