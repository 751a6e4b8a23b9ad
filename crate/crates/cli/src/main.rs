#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod bench;
mod config;
mod error;
mod evaluate;
mod fit;
mod predict;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::evaluate::Reference;

#[derive(Parser, Debug)]
#[command(name = "occu", version, about = "Multi-species occupancy-detection models for checklist data")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Worker threads shared by all engines (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model from a JSON config.
    Fit {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Occupancy maps for sites, or detection probabilities for checklists.
    Predict(PredictCmd),
    /// Score predictions against held-out detections or an expert map.
    Evaluate(EvaluateCmd),
    /// Write a synthetic dataset with known parameters.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time the likelihood and MLE across dataset sizes.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct PredictCmd {
    /// Output directory of `occu fit`.
    fit_dir: PathBuf,
    #[arg(long)]
    sites: PathBuf,
    /// Predict per-checklist detection probabilities instead of site maps.
    #[arg(long)]
    checklists: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Posterior draws used for VI and MCMC fits.
    #[arg(long, default_value_t = occu::eval::DEFAULT_PREDICTIVE_DRAWS)]
    draws: usize,
    /// Central interval mass for `psi_lo` and `psi_hi`.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("reference").required(true).args(["test_detections", "expert_map"])))]
struct EvaluateCmd {
    #[arg(long)]
    predictions: PathBuf,
    /// Long-format `checklist_id,species,detected` test labels.
    #[arg(long)]
    test_detections: Option<PathBuf>,
    /// `cell_id,species,present` range map.
    #[arg(long)]
    expert_map: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = occu::eval::DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    pool.build_global().map_err(|e| CliError::Usage(e.to_string()))?;

    match cli.command {
        Command::Fit { config, seed, out_dir } => fit::run(fit::FitArgs {
            config: &config,
            seed,
            out_dir: out_dir.as_deref(),
        }),
        Command::Predict(p) => predict::run(predict::PredictArgs {
            fit_dir: &p.fit_dir,
            sites: &p.sites,
            checklists: p.checklists.as_deref(),
            out: &p.out,
            draws: p.draws,
            level: p.level,
            seed: p.seed,
        }),
        Command::Evaluate(e) => {
            let reference = match (&e.test_detections, &e.expert_map) {
                (Some(d), _) => Reference::Detections(d),
                (None, Some(m)) => Reference::ExpertMap(m),
                (None, None) => unreachable!("clap requires one reference"),
            };
            evaluate::run(evaluate::EvaluateArgs {
                predictions: &e.predictions,
                reference,
                out: &e.out,
                bootstrap: e.bootstrap,
                seed: e.seed,
            })
        }
        Command::Simulate { config, out, seed } => simulate::run(&config, &out, seed),
        Command::Bench { config, out } => bench::run(config.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
