//! `causalforge` command-line tool.

mod commands;
mod error;
mod file;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use causalforge::DEFAULT_TOL;
use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "causalforge", version, about = "Build, check and transform process matrices; run conversion and distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the JSON report to this path (`-` for stdout).
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Numerical tolerance for all checks.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a process or operation file.
    Build(BuildArgs),
    /// Validate a process (or an operation with --nso).
    Check(CheckArgs),
    /// Link product of two files.
    Link(LinkArgs),
    /// Apply an operation file to a process file.
    Apply(ApplyArgs),
    /// Deterministic conversion between generalized switches.
    Convert(ConvertArgs),
    /// Probabilistic conversion through a local filter on the control.
    Filter(ConvertArgs),
    /// Single-copy distillation rate towards the quantum switch.
    DistillRate(RateArgs),
    /// Collective distillation on N copies.
    DistillMulticopy(MulticopyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuildKind {
    Switch,
    FixedOrder,
    Generalized,
    #[value(alias = "w_ent")]
    WEnt,
    /// Probabilistic lab swap (operation file).
    Pls,
    /// Random local operation with ancillary entanglement (operation file).
    RandomLoae,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderArg {
    #[value(name = "a-b")]
    AToB,
    #[value(name = "b-a")]
    BToA,
    /// Compatible with neither order.
    Neither,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(value_enum)]
    pub kind: BuildKind,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Branch of a fixed-order process.
    #[arg(long, default_value_t = 0)]
    pub bit: u8,
    /// Branch weights of a generalized switch.
    #[arg(long, num_args = 2, value_names = ["P0", "P1"])]
    pub p: Option<Vec<f64>>,
    /// Wire unitaries: a gate name (I, X, Y, Z, H) or a JSON matrix of
    /// numbers or `[re, im]` pairs.
    #[arg(long)]
    pub u_pa: Option<String>,
    #[arg(long)]
    pub u_ab: Option<String>,
    #[arg(long)]
    pub u_bf: Option<String>,
    #[arg(long)]
    pub u_pb: Option<String>,
    #[arg(long)]
    pub u_ba: Option<String>,
    #[arg(long)]
    pub u_af: Option<String>,
    /// Use a random constraint-satisfying generalized switch.
    #[arg(long)]
    pub random: bool,
    /// Reject generalized switches that break the wiring constraints.
    #[arg(long)]
    pub require_constraints: bool,
    /// Swap probability of a PLS operation.
    #[arg(long, default_value_t = 0.5)]
    pub swap_prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Report compatibility with both fixed orders.
    #[arg(long)]
    pub order: bool,
    /// Require the given order verdict.
    #[arg(long, value_enum)]
    pub expect_order: Option<OrderArg>,
    /// Report whether control and target are entangled.
    #[arg(long)]
    pub entanglement: bool,
    /// Treat the file as an operation and check the non-signaling conditions.
    #[arg(long)]
    pub nso: bool,
}

#[derive(Args, Debug)]
pub struct LinkArgs {
    /// Two input files.
    #[arg(long = "in", num_args = 2, required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ApplyArgs {
    /// Process file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Operation file.
    #[arg(long)]
    pub op: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long, num_args = 2, value_names = ["P0", "P1"], required = true)]
    pub from_p: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["P0", "P1"], required = true)]
    pub to_p: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Draw random constraint-satisfying unitaries and control bases.
    #[arg(long)]
    pub random_specs: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct RateArgs {
    #[arg(long, num_args = 2, value_names = ["P0", "P1"], required = true)]
    pub p: Vec<f64>,
    /// Copies per Monte Carlo batch.
    #[arg(long = "N", default_value_t = 1)]
    pub n: usize,
    /// Monte Carlo batches; 0 skips sampling.
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct MulticopyArgs {
    #[arg(long, num_args = 2, value_names = ["P0", "P1"], required = true)]
    pub p: Vec<f64>,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub random_specs: bool,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CAUSALFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Input(format!("CAUSALFORGE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli, echo: Vec<String>) -> Result<report::Report, CliError> {
    init_threads()?;
    if cli.tol.is_nan() || cli.tol < 0.0 {
        return Err(CliError::Input(format!("tolerance must be non-negative, got {}", cli.tol)));
    }
    let mut r = report::Report::new(echo);
    match &cli.command {
        Command::Build(a) => commands::build(a, cli.tol, &mut r)?,
        Command::Check(a) => commands::check(a, cli.tol, &mut r)?,
        Command::Link(a) => commands::link(a, &mut r)?,
        Command::Apply(a) => commands::apply(a, cli.tol, &mut r)?,
        Command::Convert(a) => commands::convert(a, cli.tol, &mut r)?,
        Command::Filter(a) => commands::filter(a, cli.tol, &mut r)?,
        Command::DistillRate(a) => commands::distill_rate(a, cli.tol, &mut r)?,
        Command::DistillMulticopy(a) => commands::distill_multicopy(a, cli.tol, &mut r)?,
    }
    Ok(r)
}

fn main() -> ExitCode {
    let echo: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let json = cli.json.clone();
    match run(cli, echo).and_then(|r| r.emit(json.as_deref()).map(|_| r.pass)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
