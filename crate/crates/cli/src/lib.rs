//! Experiment harness behind the `rwis` binary: walks with internal
//! states, the two-particle energy-exchange model and scaled renewal
//! processes.

mod commands;
pub mod config;
pub mod error;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use crate::config::ExperimentConfig;
pub use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "rwis", version, about = "Random walks with internal states: experiments")]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "RWIS_OUT_DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArg {
    /// Built-in model name or model file path.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the model conditions.
    Validate {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Asymptotic covariance, optionally against Monte Carlo.
    Sigma {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        lambda_t: Option<f64>,
    },
    /// Local limit theorem error on a time ladder.
    LltCheck {
        #[command(flatten)]
        model: ModelArg,
        /// Comma-separated times.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// `stationary` or an internal-state index.
        #[arg(long)]
        start: Option<String>,
    },
    /// First-return tail of a planar walk.
    ReturnTail {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Ensemble of two-particle runs summarised at the horizon.
    SimulateDuet {
        #[command(flatten)]
        model: ModelArg,
        /// Energy kernel: uniform, sticky, swap, identity or tabulated.
        #[arg(long)]
        kernel: Option<String>,
        /// Physical horizon.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        lambda0: Option<f64>,
    },
    /// Renewal-process diagnostics.
    Renewal {
        /// slow_log, exponential or pareto.
        #[arg(long)]
        tail: Option<String>,
        /// constant, uniform, sticky or swap.
        #[arg(long)]
        chain: Option<String>,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Two-sample test of duet output against the mixture law.
    MixtureTest {
        #[command(flatten)]
        model: ModelArg,
        /// CSV from `simulate-duet`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// mixture or product.
        #[arg(long)]
        reference: Option<String>,
        #[arg(long)]
        permutations: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Validate { .. } => "validate",
            Self::Sigma { .. } => "sigma",
            Self::LltCheck { .. } => "llt-check",
            Self::ReturnTail { .. } => "return-tail",
            Self::SimulateDuet { .. } => "simulate-duet",
            Self::Renewal { .. } => "renewal",
            Self::MixtureTest { .. } => "mixture-test",
        }
    }

    /// Folds subcommand flags into the configuration.
    fn apply(&self, cfg: &mut ExperimentConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        match self {
            Self::Validate { model } => set(&mut cfg.model, &model.model),
            Self::Sigma { model, trials, lambda_t } => {
                set(&mut cfg.model, &model.model);
                set(&mut cfg.sigma.trials, trials);
                set(&mut cfg.sigma.lambda_t, lambda_t);
            }
            Self::LltCheck { model, times, start } => {
                set(&mut cfg.model, &model.model);
                set(&mut cfg.llt.times, times);
                set(&mut cfg.llt.start, start);
            }
            Self::ReturnTail { model, times, trials, t_max } => {
                set(&mut cfg.model, &model.model);
                set(&mut cfg.return_tail.times, times);
                set(&mut cfg.return_tail.trials, trials);
                if t_max.is_some() {
                    cfg.return_tail.t_max = *t_max;
                }
            }
            Self::SimulateDuet { model, kernel, t, trials, lambda0 } => {
                set(&mut cfg.model, &model.model);
                set(&mut cfg.kernel.energy, kernel);
                set(&mut cfg.duet.t, t);
                set(&mut cfg.duet.trials, trials);
                set(&mut cfg.duet.lambda0, lambda0);
            }
            Self::Renewal { tail, chain, times, trials } => {
                set(&mut cfg.renewal.tail, tail);
                set(&mut cfg.renewal.chain, chain);
                set(&mut cfg.renewal.times, times);
                set(&mut cfg.renewal.trials, trials);
            }
            Self::MixtureTest { model, input, reference, permutations } => {
                set(&mut cfg.model, &model.model);
                if input.is_some() {
                    cfg.mixture.input = input.clone();
                }
                set(&mut cfg.mixture.reference, reference);
                set(&mut cfg.mixture.permutations, permutations);
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cli.command.apply(&mut cfg);
    let workers = cfg.workers.unwrap_or(1);
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("rwis-out"));
    let mut out = OutputDir::create(&dir)?;
    let name = cli.command.name();
    out.text("config.toml", &cfg.to_toml()?)?;
    let result = pool.install(|| commands::dispatch(name, &cfg, &mut out));
    // The manifest is written even when validation fails, so the report
    // that explains the failure is accounted for.
    match result {
        Ok(()) | Err(CliError::ValidationFailed(_)) => {
            out.finish(name, &cfg, workers, started.elapsed().as_secs_f64())?;
            result
        }
        Err(e) => Err(e),
    }
}

/// Runs the harness on a full argument list (program name first) and
/// returns the process exit status. Errors go to stderr as JSON.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
