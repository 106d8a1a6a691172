//! `motb`: model-free bounds for lookback options from call-implied
//! marginals.
//!
//! Subcommands: `bound` (closed-form bound + optimal hedge), `forward`
//! (forward-start bound from two marginals), `verify` (Monte Carlo embedding
//! and pathwise hedge check), `dual` (finite-difference dual solver and
//! hedge minimization).
//!
//! Exit codes: 0 success, 1 verification checks failed, 2 input validation
//! failed, 3 I/O failure, 4 numerical failure (divergence, no convergence).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use motb_core::embedding::{self, SimulationConfig};
use motb_core::formats::{
    self, BoundReportFile, CheckResult, DualReportFile, ForwardReportFile, VerifyReportFile,
    SCHEMA_VERSION,
};
use motb_core::lookback;
use motb_core::{dual, forward, Error as CoreError, Marginal64, Payoff64};

#[derive(Parser)]
#[command(name = "motb", version, about = "Model-free lookback option bounds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form lookback bound, optimal hedge and transform curves.
    Bound(BoundArgs),
    /// Forward-start lookback bound from two marginals in convex order.
    Forward(ForwardArgs),
    /// Monte Carlo verification of the embedding and the pathwise hedge.
    Verify(VerifyArgs),
    /// Dual stopping-problem solver and hedge minimization.
    Dual(DualArgs),
}

#[derive(Args)]
struct BoundArgs {
    /// Marginal spec file (JSON).
    #[arg(long)]
    marginal: PathBuf,
    /// Payoff spec file (JSON).
    #[arg(long)]
    payoff: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForwardArgs {
    /// Marginal spec files, earlier maturity first (exactly two).
    #[arg(long = "marginal", required = true)]
    marginals: Vec<PathBuf>,
    #[arg(long)]
    payoff: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    marginal: PathBuf,
    #[arg(long)]
    payoff: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// RNG seed; all randomness derives from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of Monte Carlo paths.
    #[arg(long, default_value_t = 200_000)]
    paths: usize,
    /// Euler step size.
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    /// Acceptance threshold for the KS statistics.
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    /// Disable the Brownian-bridge corrections (plain Euler monitoring).
    #[arg(long)]
    plain_euler: bool,
    /// Use antithetic path pairs.
    #[arg(long)]
    antithetic: bool,
}

#[derive(Args)]
struct DualArgs {
    #[arg(long)]
    marginal: PathBuf,
    #[arg(long)]
    payoff: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Nodes per grid axis.
    #[arg(long, default_value_t = 400)]
    grid: usize,
    /// Number of hedge knots for the minimization.
    #[arg(long, default_value_t = 24)]
    knots: usize,
}

enum Failure {
    Checks,
    Validation(String),
    Io(String),
    Numerics(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Checks => 1,
            Failure::Validation(_) => 2,
            Failure::Io(_) => 3,
            Failure::Numerics(_) => 4,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite(_)
            | CoreError::InvalidMarginal { .. }
            | CoreError::InvalidPayoff { .. }
            | CoreError::InvalidCurve(_)
            | CoreError::InvalidHedge(_)
            | CoreError::InvalidConfig { .. }
            | CoreError::ConvexOrderViolated { .. }
            | CoreError::DomainViolation(_) => Failure::Validation(e.to_string()),
            CoreError::DivergentIntegral(_)
            | CoreError::NoRoot(_)
            | CoreError::NoConvergence(_)
            | CoreError::ExcessiveCapped { .. } => Failure::Numerics(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MOTB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Bound(a) => cmd_bound(&a),
        Cmd::Forward(a) => cmd_forward(&a),
        Cmd::Verify(a) => cmd_verify(&a),
        Cmd::Dual(a) => cmd_dual(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Checks => eprintln!("verification checks failed"),
                Failure::Validation(m) => eprintln!("validation error: {m}"),
                Failure::Io(m) => eprintln!("i/o error: {m}"),
                Failure::Numerics(m) => eprintln!("numerical failure: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_marginal(path: &Path) -> Result<Marginal64, Failure> {
    let text = fs::read_to_string(path)?;
    Ok(formats::parse_marginal(&text)?)
}

fn load_payoff(path: &Path) -> Result<Payoff64, Failure> {
    let text = fs::read_to_string(path)?;
    Ok(formats::parse_payoff(&text)?)
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Io(format!("serialize {name}: {e}")))?;
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn write_csv_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<(), Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}

fn cmd_bound(args: &BoundArgs) -> Result<(), Failure> {
    let mu = load_marginal(&args.marginal)?;
    let g = load_payoff(&args.payoff)?;
    fs::create_dir_all(&args.out)?;
    let report = lookback::lookback_bound(&mu, &g)?;
    let file = BoundReportFile {
        schema_version: SCHEMA_VERSION,
        kind: "lookback_bound".into(),
        bound: report.bound,
        static_leg: report.static_leg,
        dynamic_leg: report.dynamic_leg,
        decomposition_gap: report.decomposition_gap,
        quad_error: report.quad_error,
        truncation: report.truncation,
    };
    write_json(&args.out, "report.json", &file)?;
    write_csv_with(&args.out, "lambda_star.csv", |b| report.hedge.write_csv(b))?;
    write_csv_with(&args.out, "barycenter.csv", |b| report.barycenter.write_csv(b))?;
    write_csv_with(&args.out, "beta.csv", |b| report.beta.write_csv(b))?;
    println!("bound {}", report.bound);
    Ok(())
}

fn cmd_forward(args: &ForwardArgs) -> Result<(), Failure> {
    if args.marginals.len() != 2 {
        return Err(Failure::Validation(format!(
            "forward needs exactly two --marginal files, got {}",
            args.marginals.len()
        )));
    }
    let mu1 = load_marginal(&args.marginals[0])?;
    let mu2 = load_marginal(&args.marginals[1])?;
    let g = load_payoff(&args.payoff)?;
    fs::create_dir_all(&args.out)?;
    let report = forward::forward_bound(&mu1, &mu2, &g)?;
    let file = ForwardReportFile {
        schema_version: SCHEMA_VERSION,
        kind: "forward_lookback_bound".into(),
        bound: report.bound,
        bound_second_form: report.bound_second_form,
        form_gap: report.form_gap,
        quad_error: report.quad_error,
    };
    write_json(&args.out, "report.json", &file)?;
    write_csv_with(&args.out, "psi2_star.csv", |b| report.psi2.write_csv(b))?;
    println!("bound {}", report.bound);
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    if !args.tol.is_finite() || args.tol <= 0.0 {
        return Err(Failure::Validation("--tol must be positive".into()));
    }
    let mu = load_marginal(&args.marginal)?;
    let g = load_payoff(&args.payoff)?;
    fs::create_dir_all(&args.out)?;
    let mut cfg = SimulationConfig::for_marginal(&mu, args.paths, args.dt, args.seed)?;
    cfg.bridge = !args.plain_euler;
    cfg.antithetic = args.antithetic;

    let bound = mu.hl_expectation(&g)?.value;
    let samples = embedding::run_paths(&mu, &cfg)?;
    let capped = embedding::capped_fraction(&samples);
    let ks_x = embedding::ks_x_tau(&samples, &mu);
    let ks_m = embedding::ks_m_tau(&samples, &mu);
    let (mart_mean, mart_se) = embedding::martingale_check(&samples);
    let (primal_mean, primal_se) = embedding::primal_from_samples(&samples, &g);
    let slack = embedding::hedge_verify(&mu, &g, &cfg)?;

    let allowance = 10.0 * args.dt * (1.0 + slack.max_abs_delta);
    let scale = 1.0 + bound.abs();
    let checks = vec![
        CheckResult {
            name: "capped_fraction".into(),
            value: capped,
            threshold: embedding::CAPPED_LIMIT,
            passed: capped <= embedding::CAPPED_LIMIT,
        },
        CheckResult {
            name: "ks_x_tau".into(),
            value: ks_x,
            threshold: args.tol,
            passed: ks_x <= args.tol,
        },
        CheckResult {
            name: "ks_m_tau".into(),
            value: ks_m,
            threshold: args.tol,
            passed: ks_m <= args.tol,
        },
        CheckResult {
            name: "martingale_mean".into(),
            value: (mart_mean - mu.mean()).abs(),
            threshold: 3.0 * mart_se + 1e-12,
            passed: (mart_mean - mu.mean()).abs() <= 3.0 * mart_se + 1e-12,
        },
        CheckResult {
            name: "primal_vs_bound".into(),
            value: (primal_mean - bound).abs(),
            threshold: 3.0 * primal_se + allowance,
            passed: (primal_mean - bound).abs() <= 3.0 * primal_se + allowance,
        },
        CheckResult {
            name: "dt_bias".into(),
            value: allowance,
            threshold: 0.05 * scale,
            passed: allowance <= 0.05 * scale,
        },
        CheckResult {
            name: "slack_fraction".into(),
            value: slack.fraction_below_tolerance,
            threshold: 0.01,
            passed: slack.fraction_below_tolerance <= 0.01,
        },
        CheckResult {
            name: "slack_mean".into(),
            value: slack.mean,
            threshold: 3.0 * slack.se + allowance,
            passed: slack.mean >= -(3.0 * slack.se + allowance),
        },
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    let file = VerifyReportFile {
        schema_version: SCHEMA_VERSION,
        kind: "embedding_verification".into(),
        bound,
        paths: args.paths,
        dt: args.dt,
        seed: args.seed,
        capped_fraction: capped,
        ks_x_tau: ks_x,
        ks_m_tau: ks_m,
        martingale_mean: mart_mean,
        martingale_se: mart_se,
        primal_mean,
        primal_se,
        dt_bias_allowance: allowance,
        slack_min: slack.min,
        slack_p1: slack.p1,
        slack_p5: slack.p5,
        slack_p50: slack.p50,
        slack_mean: slack.mean,
        slack_se: slack.se,
        slack_tolerance: slack.tolerance,
        slack_fraction_below: slack.fraction_below_tolerance,
        max_abs_delta: slack.max_abs_delta,
        checks,
        all_passed,
    };
    write_json(&args.out, "diagnostics.json", &file)?;
    write_csv_with(&args.out, "samples.csv", |b| embedding::write_samples_csv(&samples, b))?;
    println!(
        "primal {} +/- {} vs bound {} ({} checks)",
        primal_mean,
        primal_se,
        bound,
        if all_passed { "all passed" } else { "FAILED" }
    );
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_dual(args: &DualArgs) -> Result<(), Failure> {
    let mu = load_marginal(&args.marginal)?;
    let g = load_payoff(&args.payoff)?;
    fs::create_dir_all(&args.out)?;
    if args.knots < 2 {
        return Err(Failure::Validation("need at least 2 knots".into()));
    }
    let grid = dual::StoppingGrid::for_marginal(&mu, args.grid)?;
    let bound = mu.hl_expectation(&g)?.value;
    let star = lookback::lambda_star(&mu, &g)?;
    let sol = dual::solve_u(&star, &g, &grid)?;
    let at_star = lookback::static_price(&mu, &star)? + sol.value_at_origin;

    let lo = mu.lower_endpoint();
    let hi = mu.hl_quantile(1e-6);
    let knots: Vec<f64> = (0..args.knots)
        .map(|i| lo + (hi - lo) * i as f64 / args.knots as f64)
        .collect();
    let minimized = dual::minimize_dual(&mu, &g, &knots, &grid)?;

    let file = DualReportFile {
        schema_version: SCHEMA_VERSION,
        kind: "dual_solution".into(),
        bound,
        grid_nodes: grid.len(),
        grid_spacing: grid.spacing(),
        value_at_lambda_star: at_star,
        minimized_value: minimized.value,
        gap: minimized.gap,
        converged: minimized.converged,
        scheme_residual: sol.scheme_residual,
    };
    write_json(&args.out, "report.json", &file)?;
    write_csv_with(&args.out, "value_surface.csv", |b| sol.write_surface_csv(b))?;
    write_csv_with(&args.out, "exercise_boundary.csv", |b| sol.write_boundary_csv(b))?;
    let mut trace = String::new();
    for step in &minimized.trace {
        trace.push_str(
            &serde_json::to_string(step).map_err(|e| Failure::Io(e.to_string()))?,
        );
        trace.push('\n');
    }
    fs::write(args.out.join("minimize_trace.jsonl"), trace)?;
    println!("dual value {} (gap {})", minimized.value, minimized.gap);
    Ok(())
}
