//! `stochsym`: command-line front end.
//!
//! Every run prints one JSON report on stdout whose last field is `status`.
//! Exit code 0 means `"status": "ok"`, 1 a domain or validation error, and 2
//! a usage error.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use report::Report;

#[derive(Debug, Parser)]
#[command(
    name = "stochsym",
    version,
    about = "Symmetry analysis and numerics for scalar Ito equations"
)]
struct Cli {
    /// Leave the wall-clock timestamp out of the report, so that identical
    /// runs give byte-identical output.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify dx = f dt + σ dw into types A, B, C or none.
    Classify(ClassifyArgs),
    /// Reduce to unit noise by ξ = ∫ dx/σ.
    Normalize(NormalizeArgs),
    /// Integrate along Wiener paths through the rectifying change of variables.
    Kozlov(KozlovArgs),
    /// Euler–Maruyama (or exact) ensemble simulation.
    Simulate(SimulateArgs),
    /// Fokker–Planck equation tools.
    #[command(subcommand)]
    Fp(FpCommand),
    /// Drifts with maximal Fokker–Planck symmetry.
    #[command(subcommand)]
    Weber(WeberCommand),
    /// Compare an ensemble histogram with the density solve.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Subcommand)]
enum FpCommand {
    /// Crank–Nicolson solve with zero-flux ends.
    Solve(FpSolveArgs),
    /// Classify the symmetry algebra (cases I, II, III) and list generators.
    Classify(EquationArg),
    /// Residual of a candidate vector field in the determining equations.
    Verify(FpVerifyArgs),
}

#[derive(Debug, Subcommand)]
enum WeberCommand {
    /// Generate f with f' + f² = μ0 + μ1 x + μ2 x².
    Gen(WeberArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EquationArg {
    /// Equation file: {"drift": "...", "sigma": "...", "domain": [a, b]}.
    pub equation: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    pub equation: PathBuf,
    /// Time window for drifts that depend on t.
    #[arg(
        long,
        value_name = "T0,T1",
        default_value = "0,1",
        allow_hyphen_values = true
    )]
    pub tspan: String,
}

#[derive(Debug, Args, Serialize)]
pub struct NormalizeArgs {
    pub equation: PathBuf,
    /// Number of (x, xi) rows in the transform table.
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    /// Time at which the table is sampled.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub at_t: f64,
    /// Write the table as CSV (x, xi) instead of embedding it in the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct KozlovArgs {
    pub equation: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 10)]
    pub paths: u64,
    /// Initial value; defaults to the domain's reference point.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    /// Write every path as CSV (path_id, t, y, x).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    pub equation: PathBuf,
    #[arg(long = "N", default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Initial law: `point:x0` or `gaussian:mean,sd`. Defaults to the
    /// domain's reference point.
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<String>,
    /// `em` (Euler–Maruyama) or `exact` (types A and B only).
    #[arg(long, default_value = "em")]
    pub method: String,
    /// Write saved states as CSV (path_id, t, x).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// With --out: keep every k-th step.
    #[arg(long, default_value_t = 1)]
    pub save_every: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FpSolveArgs {
    pub equation: PathBuf,
    /// Uniform grid `xmin,xmax,Nx`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    /// Initial density `gaussian:mean,sd`.
    #[arg(long, allow_hyphen_values = true)]
    pub init: String,
    /// Intermediate snapshots kept between the initial and final states,
    /// every steps/(k+1) steps.
    #[arg(long, default_value_t = 10)]
    pub snapshots: usize,
    /// Write snapshots as CSV (t, x, u).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FpVerifyArgs {
    pub equation: PathBuf,
    /// Vector field file: {"tau": "...", "xi": "...", "phi1": "..."}.
    pub field: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct WeberArgs {
    /// Riccati coefficients `mu0,mu1,mu2`.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: String,
    /// Interval `lo,hi` on which f must be regular.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: String,
    /// `auto`, `hermite` or `initial:f0`.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub branch: String,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    /// Write sampled drift values as CSV (x, f).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CrossvalArgs {
    pub equation: PathBuf,
    #[arg(long = "N", default_value_t = 200_000)]
    pub n: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub dt: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    /// Uniform grid `xmin,xmax,Nx`, also the histogram bins.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Initial law `gaussian:mean,sd`.
    #[arg(long, allow_hyphen_values = true)]
    pub init: String,
    /// Time step of the density solve; defaults to --dt.
    #[arg(long)]
    pub fp_dt: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ts = !cli.no_timestamp;
    let (name, config) = match &cli.command {
        Command::Classify(a) => ("classify", serde_json::to_value(a)),
        Command::Normalize(a) => ("normalize", serde_json::to_value(a)),
        Command::Kozlov(a) => ("kozlov", serde_json::to_value(a)),
        Command::Simulate(a) => ("simulate", serde_json::to_value(a)),
        Command::Fp(FpCommand::Solve(a)) => ("fp solve", serde_json::to_value(a)),
        Command::Fp(FpCommand::Classify(a)) => ("fp classify", serde_json::to_value(a)),
        Command::Fp(FpCommand::Verify(a)) => ("fp verify", serde_json::to_value(a)),
        Command::Weber(WeberCommand::Gen(a)) => ("weber gen", serde_json::to_value(a)),
        Command::Crossval(a) => ("crossval", serde_json::to_value(a)),
    };
    let mut report = Report::new(name, config.unwrap_or_default(), ts);
    let r = &mut report;
    let result = match &cli.command {
        Command::Classify(a) => commands::classify(a, r),
        Command::Normalize(a) => commands::normalize(a, r),
        Command::Kozlov(a) => commands::kozlov(a, r),
        Command::Simulate(a) => commands::simulate(a, r),
        Command::Fp(FpCommand::Solve(a)) => commands::fp_solve(a, r),
        Command::Fp(FpCommand::Classify(a)) => commands::fp_classify(a, r),
        Command::Fp(FpCommand::Verify(a)) => commands::fp_verify(a, r),
        Command::Weber(WeberCommand::Gen(a)) => commands::weber_gen(a, r),
        Command::Crossval(a) => commands::crossval(a, r),
    };
    let (json, code) = report.finish(result);
    let text = serde_json::to_string_pretty(&json).expect("report serializes");
    // a closed pipe downstream is not our failure
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    ExitCode::from(code as u8)
}
