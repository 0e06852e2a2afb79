//! `tangency analyze`: decide local minimality of a bivariate polynomial (or its
//! absolute value) at a point and write a deterministic report.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{ArgGroup, Parser, Subcommand};
use tangency_core::polynomial::{parse_rational, Rational};
use tangency_core::report::{emit_csv, emit_report};
use tangency_core::{run, AnalysisReport, ModelKind, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "tangency",
    version,
    about = "Local minimality of bivariate polynomials via tangency curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze one function at one point.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("input").required(true).args(["function", "abs"])))]
struct AnalyzeArgs {
    /// Polynomial in x and y, e.g. "3*x^2+2*y^3".
    #[arg(long = "fn", value_name = "EXPR")]
    function: Option<String>,
    /// Analyze the absolute value of this polynomial.
    #[arg(long, value_name = "EXPR")]
    abs: Option<String>,
    /// Center point as `x,y`; rational literals such as `1/2` are accepted.
    #[arg(
        long,
        value_name = "X,Y",
        default_value = "0,0",
        allow_hyphen_values = true
    )]
    at: String,
    /// Largest radius of the ladder.
    #[arg(long, default_value = "1/8", allow_hyphen_values = true)]
    t0: String,
    /// Ratio between consecutive radii.
    #[arg(long, default_value = "1/2", allow_hyphen_values = true)]
    rho: String,
    /// Number of radii.
    #[arg(long, default_value_t = 24)]
    rungs: usize,
    /// Largest denominator of a snapped exponent.
    #[arg(long, default_value_t = 12)]
    qmax: u32,
    /// Angular grid of the minimum-over-circle oracle.
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    /// Probe samples per radius.
    #[arg(long = "per-rung", default_value_t = 512)]
    per_rung: usize,
    /// Extra exponent for the growth, subregularity and gradient probes (repeatable).
    #[arg(long = "alpha", value_name = "A", allow_hyphen_values = true)]
    alphas: Vec<f64>,
    /// Run the distance-ratio probe along the zero set (absolute-value models only).
    #[arg(long)]
    counterexample: bool,
    /// Write the JSON report here instead of printing it.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Write plot data as CSV.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Seed for randomized probe phases.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record stage timings in the report (makes it non-reproducible).
    #[arg(long)]
    timings: bool,
}

fn rational(name: &str, text: &str) -> Result<Rational> {
    parse_rational(text).map_err(|e| anyhow!("--{name}: {e}"))
}

fn config(args: &AnalyzeArgs) -> Result<RunConfig> {
    let (kind, text) = match (&args.function, &args.abs) {
        (Some(f), None) => (ModelKind::Smooth, f),
        (None, Some(f)) => (ModelKind::AbsOfPoly, f),
        _ => unreachable!("clap enforces exactly one of --fn and --abs"),
    };
    let parts: Vec<&str> = args.at.split(',').collect();
    let [x, y] = parts.as_slice() else {
        return Err(anyhow!("--at: expected `x,y`, got `{}`", args.at));
    };
    let mut cfg = RunConfig::new(kind, text);
    cfg.center = [rational("at", x)?, rational("at", y)?];
    cfg.t0 = rational("t0", &args.t0)?;
    cfg.rho = rational("rho", &args.rho)?;
    cfg.rungs = args.rungs;
    cfg.qmax = args.qmax;
    cfg.grid = args.grid;
    cfg.per_rung = args.per_rung;
    cfg.verify_alphas = args.alphas.clone();
    cfg.counterexample = args.counterexample;
    cfg.seed = args.seed;
    cfg.timings = args.timings;
    Ok(cfg)
}

fn summary(report: &AnalysisReport) -> String {
    let c = &report.classification;
    let mut lines = vec![format!("verdict: {}", c.verdict)];
    let opt = |x: &Option<String>| x.clone().unwrap_or_else(|| "-".into());
    let optf = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
    lines.push(format!(
        "tangency polynomial: {}",
        report.tangency_polynomial
    ));
    lines.push(format!(
        "alpha_star: {}  a_star: {}  lojasiewicz: {}  subregularity: {}",
        opt(&c.alpha_star),
        optf(c.a_star),
        optf(c.lojasiewicz_exponent),
        opt(&c.subregularity_order)
    ));
    for b in &report.branches {
        lines.push(format!(
            "branch {}: alpha {} a {} {}",
            b.id,
            opt(&b.alpha),
            optf(b.a),
            if b.constant { "constant" } else { "" }
        ));
    }
    for w in &report.warnings {
        lines.push(format!("warning: {w}"));
    }
    lines.join("\n")
}

fn analyze(args: &AnalyzeArgs) -> Result<i32> {
    let cfg = config(args)?;
    let report = run(&cfg)?;
    if let Some(path) = &args.csv {
        emit_csv(&report, path).with_context(|| format!("writing {}", path.display()))?;
    }
    match &args.report {
        Some(path) => {
            emit_report(&report, path).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", summary(&report));
        }
        None => print!("{}", report.to_canonical_json()?),
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Analyze(args) => match analyze(&args) {
            Ok(code) => ExitCode::from(code as u8),
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
