//! `srda`: generate shifted domains, train with smoothness regularization,
//! evaluate checkpoints and self-check gradients.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "srda", version, about = "Smoothness-regularized domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a source/target pair of synthetic CSV datasets and a manifest.
    GenData(GenDataArgs),
    /// Train from a TOML run file; writes checkpoint, metrics and the resolved config.
    Train(TrainArgs),
    /// Print accuracy, mean LSD and the prediction-flip proxy for a checkpoint.
    Eval(EvalArgs),
    /// Compare backprop with finite differences for every loss.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    TwoMoons,
    Blobs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PlanArg {
    None,
    Isotropic,
    Fgsm,
    Vat,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Samples per domain.
    #[arg(long, default_value_t = srda::config::DEFAULT_N)]
    n: usize,
    /// Target rotation in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rotate: f64,
    /// Target offset as `dx,dy`.
    #[arg(long, value_parser = parse_offset, allow_hyphen_values = true)]
    translate: Option<[f64; 2]>,
    /// Gaussian noise standard deviation.
    #[arg(long, default_value_t = srda::config::DEFAULT_NOISE_SD)]
    noise: f64,
    /// Number of classes (blobs only).
    #[arg(long, default_value_t = srda::config::DEFAULT_BLOB_CLASSES)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `train.plan`; `none` trains on the source only.
    #[arg(long, value_enum)]
    plan: Option<PlanArg>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV dataset in the model's input space, e.g. `train-target.csv` from a run directory.
    #[arg(long)]
    data: PathBuf,
    /// Perturbation plans to report; repeat or comma-separate.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "isotropic")]
    plan: Vec<PlanArg>,
    #[arg(long, default_value_t = srda::perturbation::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Base seed of the per-sample perturbation streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// First of the consecutive model seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Negative control: perturb the analytic gradient of this segment.
    #[arg(long, hide = true)]
    corrupt_backward: Option<String>,
}

fn parse_offset(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [dx, dy] = parts.as_slice() else {
        return Err(format!("expected `dx,dy`, got `{s}`"));
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([num(dx)?, num(dy)?])
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SRDA_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
