use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use substab::base::BaseKind;
use substab::eval::Method;
use substab::parallel::{Workers, WORKERS_ENV};

mod commands;
mod output;

#[derive(Parser)]
#[command(
    name = "substab",
    version,
    about = "Subspace-based stability selection for correlated predictors"
)]
struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for multiple maximal stable feature sets.
    Fsss(FsssArgs),
    /// Classical stability selection.
    Ss(SsArgs),
    /// Cluster stability selection (sparsity flavour).
    Css(CssArgs),
    /// Per-feature stability paths over a grid of s0.
    Paths(PathsArgs),
    /// Pairwise similarities between previously found models.
    Tiles(TilesArgs),
    /// Repeated synthetic comparison of the selection methods.
    Bench(BenchArgs),
    /// Write a synthetic dataset and its ground truth.
    Gen(GenArgs),
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    pub response: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Base {
    L0,
    Lasso,
}

impl From<Base> for BaseKind {
    fn from(b: Base) -> Self {
        match b {
            Base::L0 => BaseKind::L0,
            Base::Lasso => BaseKind::Lasso,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SubsampleArgs {
    /// Number of subsamples (even: complementary pairs).
    #[arg(long = "B", default_value_t = 100, value_parser = parse_even)]
    pub num_subsamples: usize,
    /// Target support size of the base procedure.
    #[arg(long)]
    pub s0: usize,
    #[arg(long, value_enum, default_value_t = Base::L0)]
    pub base: Base,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct FsssArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub subsample: SubsampleArgs,
    /// Stability threshold, strictly between 0.5 and 1.
    #[arg(long, value_parser = parse_fsss_alpha)]
    pub alpha: f64,
    /// Number of models to return.
    #[arg(long = "K", default_value_t = 1)]
    pub k: usize,
    /// Deterministic greedy search (one model).
    #[arg(long)]
    pub greedy: bool,
    /// Skip extensions creating a pair with squared correlation above this.
    #[arg(long)]
    pub corr_guard: Option<f64>,
    #[arg(long)]
    pub max_restarts: Option<usize>,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub subsample: SubsampleArgs,
    #[arg(long, value_parser = parse_proportion)]
    pub alpha: f64,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct CssArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub subsample: SubsampleArgs,
    #[arg(long, value_parser = parse_proportion)]
    pub alpha: f64,
    /// Cut height on the 1 - |corr| dendrogram.
    #[arg(long, default_value_t = 0.3)]
    pub h: f64,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PathsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated s0 values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub s0: Vec<usize>,
    #[arg(long = "B", default_value_t = 100, value_parser = parse_even)]
    pub num_subsamples: usize,
    #[arg(long, value_enum, default_value_t = Base::L0)]
    pub base: Base,
    #[arg(long, default_value_t = 0.3)]
    pub h: f64,
    /// Ground-truth JSON written by `gen`, to label feature roles.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TilesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// models.json from an earlier `fsss` run on the same data.
    #[arg(long)]
    pub models: PathBuf,
    /// Use the response-aware similarity in the upper triangle.
    #[arg(long)]
    pub use_response: bool,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Full experiment configuration as JSON; overrides the other options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30,35,40")]
    pub s0: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "l0,ss,css,fsss_greedy",
        value_parser = parse_method
    )]
    pub methods: Vec<Method>,
    #[arg(long = "B", default_value_t = 200, value_parser = parse_even)]
    pub num_subsamples: usize,
    #[arg(long, value_enum, default_value_t = Base::L0)]
    pub base: Base,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    Figure1,
    Benchmark,
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub recipe: Recipe,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rows; defaults to the recipe's size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise standard deviation; defaults to the recipe's.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// File stem; defaults to the recipe name.
    #[arg(long)]
    pub stem: Option<String>,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

fn parse_even(s: &str) -> Result<usize, String> {
    let b: usize = s.parse().map_err(|e| format!("{e}"))?;
    if b == 0 || b % 2 != 0 {
        return Err(format!("must be a positive even number, got {b}"));
    }
    Ok(b)
}

fn parse_fsss_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(a > 0.5 && a < 1.0) {
        return Err(format!("must lie strictly between 0.5 and 1, got {a}"));
    }
    Ok(a)
}

fn parse_proportion(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(a > 0.0 && a <= 1.0) {
        return Err(format!("must lie in (0, 1], got {a}"));
    }
    Ok(a)
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: substab::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let workers = Workers(cli.workers.unwrap_or(0));
    let result = match &cli.command {
        Command::Fsss(a) => commands::fsss(a, workers),
        Command::Ss(a) => commands::ss(a, workers),
        Command::Css(a) => commands::css(a, workers),
        Command::Paths(a) => commands::paths(a, workers),
        Command::Tiles(a) => commands::tiles(a, workers),
        Command::Bench(a) => commands::bench(a, workers),
        Command::Gen(a) => commands::gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            output::report_error(&e);
            ExitCode::FAILURE
        }
    }
}
