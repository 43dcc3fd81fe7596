//! Reproducible lookahead experiments from the command line.

mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use lookahead::{ModelKind, TrainConfig, UncertaintyKind};

use manifest::{Command, DataSource, RunManifest};

#[derive(Parser)]
#[command(name = "lookahead", version, about = "Decision-aware regression with lookahead regularization")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Baseline vs lookahead on synthetic quadratic curves, per step size.
    Synth(SynthArgs),
    /// One lookahead run with its trace and held-out report.
    Train(TrainArgs),
    /// Accuracy/improvement frontier over a grid of λ.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Step size; repeat or comma-separate for several. Defaults to 0.75,1.25,3.5.
    #[arg(long, value_delimiter = ',', value_parser = non_negative, allow_negative_numbers = true)]
    eta: Vec<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// Comma-separated λ values [default: 0,1,2,4,8]
    #[arg(long, value_delimiter = ',', value_parser = non_negative, allow_negative_numbers = true)]
    grid: Vec<f64>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row; synthetic data when omitted.
    #[arg(long, requires = "target")]
    data: Option<PathBuf>,
    /// Outcome column of --data.
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated mutable columns [default: all]
    #[arg(long, value_delimiter = ',')]
    mutable: Vec<String>,
    #[arg(long, value_parser = positive_f64)]
    oracle_lr: Option<f64>,
    #[arg(long, value_parser = positive_usize)]
    oracle_epochs: Option<usize>,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, value_parser = unit_interval, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, value_parser = positive_usize)]
    rounds: Option<usize>,
    /// Number of bootstrap submodels.
    #[arg(long, value_parser = positive_usize)]
    bootstrap: Option<usize>,
    #[arg(long, value_parser = ["vanilla", "residual", "quantile"])]
    uncertainty: Option<String>,
    #[arg(long, value_parser = ["linear", "quadratic"])]
    model: Option<String>,
    #[arg(long, value_parser = positive_f64, allow_negative_numbers = true)]
    lr: Option<f64>,
    #[arg(long, value_parser = positive_usize)]
    epochs_init: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    epochs_round: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training fraction of the split.
    #[arg(long, value_parser = unit_interval, allow_negative_numbers = true)]
    split: Option<f64>,
    /// Synthetic sample count.
    #[arg(long, value_parser = positive_usize)]
    samples: Option<usize>,
    /// Output directory [default: lookahead-out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rerun a previous run's manifest.json; only --out may be combined with it.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl CommonArgs {
    fn any_config_flag(&self) -> bool {
        self.lambda.is_some()
            || self.tau.is_some()
            || self.rounds.is_some()
            || self.bootstrap.is_some()
            || self.uncertainty.is_some()
            || self.model.is_some()
            || self.lr.is_some()
            || self.epochs_init.is_some()
            || self.epochs_round.is_some()
            || self.seed.is_some()
            || self.split.is_some()
            || self.samples.is_some()
    }

    fn apply(&self, c: &mut TrainConfig) {
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => { $( if let Some(v) = self.$flag { c.$field = v; } )* };
        }
        set!(lambda => lambda, tau => tau, rounds => rounds, bootstrap => n_bootstrap,
             lr => learning_rate, epochs_init => epochs_init, epochs_round => epochs_per_round,
             seed => seed);
        if let Some(u) = &self.uncertainty {
            c.uncertainty_kind = u.parse::<UncertaintyKind>().expect("restricted by clap");
        }
        if let Some(m) = &self.model {
            c.model_kind = m.parse::<ModelKind>().expect("restricted by clap");
        }
    }
}

impl DataArgs {
    fn any_flag(&self) -> bool {
        self.data.is_some()
            || self.target.is_some()
            || !self.mutable.is_empty()
            || self.oracle_lr.is_some()
            || self.oracle_epochs.is_some()
    }

    fn source(&self, samples: usize) -> DataSource {
        match &self.data {
            None => DataSource::Synthetic { samples },
            Some(path) => DataSource::Csv {
                path: path.clone(),
                target: self.target.clone().expect("required by clap"),
                mutable: self.mutable.clone(),
                oracle_lr: self.oracle_lr.unwrap_or(0.05),
                oracle_epochs: self.oracle_epochs.unwrap_or(5000),
            },
        }
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a finite number >= 0, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a finite number > 0, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        Ok(v) => Err(format!("must lie strictly between 0 and 1, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

const DEFAULT_ETAS: [f64; 3] = [0.75, 1.25, 3.5];
const DEFAULT_GRID: [f64; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];
const DEFAULT_SAMPLES: usize = 25;

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

/// Builds the manifest from flags, or loads it when --manifest is given.
fn resolve(cmd: Cmd) -> anyhow::Result<RunManifest> {
    let (command, common, data, eta, etas, grid) = match cmd {
        Cmd::Synth(a) => {
            let etas = if a.eta.is_empty() { DEFAULT_ETAS.to_vec() } else { a.eta };
            (Command::Synth, a.common, None, Some(etas[0]), Some(etas), None)
        }
        Cmd::Train(a) => (Command::Train, a.common, Some(a.data), a.eta, None, None),
        Cmd::Sweep(a) => {
            let grid = if a.grid.is_empty() { DEFAULT_GRID.to_vec() } else { a.grid };
            (Command::Sweep, a.common, Some(a.data), a.eta, None, Some(grid))
        }
    };

    if let Some(path) = &common.manifest {
        if common.any_config_flag() || data.as_ref().is_some_and(DataArgs::any_flag) {
            usage_error("--manifest can only be combined with --out");
        }
        let mut m = RunManifest::load(path)?;
        if m.command != command {
            usage_error(format!("manifest {} is for a different subcommand", path.display()));
        }
        if let Some(out) = common.out {
            m.output_dir = out;
        }
        return Ok(m);
    }

    let mut config = TrainConfig::synthetic(eta.unwrap_or(1.25));
    common.apply(&mut config);
    if let Err(e) = config.validate() {
        usage_error(e);
    }
    let samples = common.samples.unwrap_or(DEFAULT_SAMPLES);
    let data_source = match &data {
        Some(d) => d.source(samples),
        None => DataSource::Synthetic { samples },
    };
    Ok(RunManifest {
        command,
        config,
        data_source,
        train_fraction: common.split.unwrap_or(0.75),
        etas,
        lambda_grid: grid,
        output_dir: common.out.unwrap_or_else(|| PathBuf::from("lookahead-out")),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = resolve(cli.command).and_then(|m| run::execute(&m));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
