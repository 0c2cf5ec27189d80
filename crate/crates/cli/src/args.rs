use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowforge::BoxDomain;

#[derive(Parser, Debug)]
#[command(
    name = "flowforge",
    version,
    about = "Compile and check flow-map programs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Factor x -> Wx + b into a program of affine flows.
    Factor(FactorArgs),
    /// Compile a piecewise-constant neural ODE into a ReLU/affine program.
    Compile(CompileArgs),
    /// Evaluate a program at the points of a CSV file.
    Eval(EvalArgs),
    /// Measure the distance between a program and an oracle map.
    Verify(VerifyArgs),
    /// Run a bundled scenario and write its CSV output.
    Demo(DemoArgs),
}

#[derive(Args, Debug)]
pub struct FactorArgs {
    /// CSV file with the rows of W.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV file with the entries of b (zero when omitted).
    #[arg(long)]
    pub offset: Option<PathBuf>,
    /// Program JSON destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Report CSV destination (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Box for the verification grid; defaults to [-1, 1]^d.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub domain: Option<BoxDomain>,
    #[arg(long, default_value_t = 5, value_parser = grid_resolution)]
    pub grid: usize,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    /// Neural ODE spec JSON.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long = "box", allow_hyphen_values = true)]
    pub domain: Option<BoxDomain>,
    /// Target sup error against the reference flow.
    #[arg(long, conflicts_with = "n", value_parser = positive)]
    pub eps: Option<f64>,
    /// Fixed number of Euler steps.
    #[arg(long)]
    pub n: Option<usize>,
    /// Largest number of Euler steps tried when searching for --eps.
    #[arg(long)]
    pub max_n: Option<usize>,
    /// Check that a one-dimensional program is convex on the box.
    #[arg(long)]
    pub check_convexity: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Program JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV of input points, one per row, no header.
    #[arg(long)]
    pub points: PathBuf,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Sup,
    Lp,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Program JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Oracle JSON tagged by "kind".
    #[arg(long)]
    pub oracle: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long = "box", allow_hyphen_values = true)]
    pub domain: Option<BoxDomain>,
    #[arg(long, value_enum, default_value_t = MetricArg::Sup)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Grid points per axis for the sup metric.
    #[arg(long, default_value_t = 15, value_parser = grid_resolution)]
    pub grid: usize,
    /// Monte Carlo samples for the lp metric.
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail unless the measured error is at most this.
    #[arg(long, value_parser = positive)]
    pub eps: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    /// convexity-obstruction, commutator, product-formula or neural-ode.
    pub name: String,
    /// Directory for the generated files.
    #[arg(long, default_value = ".")]
    pub output: PathBuf,
}

fn grid_resolution(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n < 2 {
        return Err("grid resolution must be at least 2".into());
    }
    Ok(n)
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_nan() || v <= 0.0 {
        return Err("value must be positive".into());
    }
    Ok(v)
}
