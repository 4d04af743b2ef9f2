//! `dsbd`: generate domains, distill structural bases, retrain and evaluate.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input or config.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsbd_core::graphdata::DensityCriterion;
use dsbd_core::infer::PipelineError;
use dsbd_core::DsbdError;

use config::ExperimentArgs;

/// Bad arguments or config detected by the CLI itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "dsbd", version, about = "Distill a prototype-graph basis that transfers graph classifiers across domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationFlag {
    Se,
    Sp,
    Ge,
    Tg,
}

impl AblationFlag {
    pub fn tag(self) -> &'static str {
        match self {
            AblationFlag::Se => "se",
            AblationFlag::Sp => "sp",
            AblationFlag::Ge => "ge",
            AblationFlag::Tg => "tg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepGrid {
    /// K over {5,10,20,30,40,50}
    K,
    /// lambda1 over {0.1,0.3,0.5,0.7,0.9}
    Lambda1,
    /// lambda2 over {0.1,0.3,0.5,0.7,0.9}
    Lambda2,
    /// the full lambda1 x lambda2 surface
    Lambdas,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Criterion {
    NodeDensity,
    EdgeDensity,
}

impl From<Criterion> for DensityCriterion {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::NodeDensity => DensityCriterion::NodeDensity,
            Criterion::EdgeDensity => DensityCriterion::EdgeDensity,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a biased source and an unbiased target Spurious-Motif domain
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Graphs per domain
        #[arg(long, default_value_t = 300)]
        n: usize,
        /// Source bias
        #[arg(long, default_value_t = 0.9)]
        bias: f64,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        target_bias: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Partition a dataset into density bins M0..M{k-1}
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Criterion::NodeDensity)]
        criterion: Criterion,
        #[arg(long, default_value_t = 4)]
        bins: usize,
    },
    /// Print per-graph moments and Dirichlet energy as JSON
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Write to this file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage one: distill a basis; writes basis.json and trace.csv
    Distill {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_enum)]
        ablate: Option<AblationFlag>,
    },
    /// Stage two: retrain a fresh model on a basis checkpoint
    TrainInfer {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Basis checkpoint
        #[arg(long)]
        basis: PathBuf,
        /// Write target readout embeddings to embeddings.csv
        #[arg(long)]
        dump_embeddings: bool,
    },
    /// Evaluate a model checkpoint on a labeled target
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_embeddings: bool,
    },
    /// Full pipeline per seed plus an aggregate report
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_enum)]
        ablate: Option<AblationFlag>,
        /// Also train and evaluate a source-only baseline
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        dump_embeddings: bool,
    },
    /// Sensitivity sweep; writes one CSV row per grid point
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_enum)]
        grid: SweepGrid,
        /// Override the grid values (comma-separated)
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Full pipeline and every single-component ablation per seed
    Ablate {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<DsbdError>() {
            return if e.is_invalid_input() { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return if e.is_invalid_input() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            out,
            n,
            bias,
            target_bias,
            seed,
        } => commands::generate(&out, n, bias, target_bias, seed),
        Command::Split {
            input,
            out,
            criterion,
            bins,
        } => commands::split(&input, &out, criterion.into(), bins),
        Command::Stats { input, out } => commands::stats(&input, out.as_deref()),
        Command::Distill { exp, ablate } => commands::distill(&exp, ablate),
        Command::TrainInfer {
            exp,
            basis,
            dump_embeddings,
        } => commands::train_infer(&exp, &basis, dump_embeddings),
        Command::Evaluate {
            model,
            target,
            out,
            dump_embeddings,
        } => commands::evaluate(&model, &target, out.as_deref(), dump_embeddings),
        Command::Run {
            exp,
            ablate,
            baseline,
            dump_embeddings,
        } => commands::run(&exp, ablate, baseline, dump_embeddings),
        Command::Sweep { exp, grid, values } => commands::sweep(&exp, grid, values),
        Command::Ablate { exp } => commands::ablate(&exp),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
