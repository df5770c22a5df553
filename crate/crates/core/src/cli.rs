//! Command-line front end: `simulate`, `optimize`, `sweep-alpha`, `verify`.
//!
//! Exit codes: 0 success, 1 invariant violation detected after the run,
//! 2 configuration error, 3 solver failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, Setup};
use crate::error::Error;
use crate::grid::norm_l2_q;
use crate::io::{fmt_f64, trajectories_to_csv};
use crate::optimize::{deep_quench_continuation, project_uad, LevelSummary, LimitReport};
use crate::physics::Level;
use crate::state::{apriori_report, energy_residual, AprioriReport, EnergyResidual, StateDiagnostics};
use crate::verify::run_suite;

#[derive(Parser, Debug)]
#[command(name = "quench-control", version, about = "Deep-quench optimal control of a nonlocal phase-field system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the state system at one quench level (0 = obstacle).
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the deep-quench continuation.
    Optimize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the state system for each alpha and at the obstacle.
    SweepAlpha {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the invariant suite; exits 0 iff every check passes.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Invariant(String),
    Config(Error),
    Solver(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Invariant(_) => 1,
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Invariant(m) => write!(f, "invariant violation: {m}"),
            Failure::Config(e) => write!(f, "configuration error: {e}"),
            Failure::Solver(e) => write!(f, "solver failure: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn solver<T>(r: crate::Result<T>) -> CliResult<T> {
    r.map_err(Failure::Solver)
}

fn load(path: Option<&Path>) -> CliResult<(Config, Setup)> {
    let cfg = match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
    .map_err(Failure::Config)?;
    let setup = cfg.build().map_err(Failure::Config)?;
    Ok((cfg, setup))
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Solver(e.into()))?;
    fs::write(dir.join(name), contents).map_err(|e| Failure::Solver(e.into()))
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Solver(e.into()))
}

fn level_of(setup: &Setup, alpha: f64) -> CliResult<Level> {
    Level::from_alpha(alpha, setup.problem.model.potential.quench_exponent).map_err(Failure::Config)
}

#[derive(Serialize)]
struct SimulateDiagnostics {
    state: StateDiagnostics,
    apriori: AprioriReport,
    energy: EnergyResidual,
}

pub fn simulate(config: Option<&Path>, alpha: f64, out: &Path) -> CliResult<()> {
    let (_, setup) = load(config)?;
    if !(alpha >= 0.0) {
        return Err(Failure::Config(Error::Config(format!(
            "alpha must be >= 0, got {alpha}"
        ))));
    }
    let level = level_of(&setup, alpha)?;
    let u = &setup.control;
    let sol = solver(setup.problem.state(u, level))?;
    let csv = solver(trajectories_to_csv(&[
        ("mu", &sol.mu),
        ("rho", &sol.rho),
        ("xi", &sol.xi),
        ("u", u),
    ]))?;
    write(out, "fields.csv", &csv)?;
    let diag = SimulateDiagnostics {
        state: sol.diagnostics.clone(),
        apriori: apriori_report(&sol),
        energy: solver(energy_residual(&sol, u, &setup.problem.model))?,
    };
    write(out, "diagnostics.json", &to_json(&diag)?)?;
    if !sol.invariants_hold() {
        return Err(Failure::Invariant(format!(
            "state invariants violated at alpha = {alpha:e}"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    schedule: &'a [f64],
    all_converged: bool,
    levels: Vec<&'a LevelSummary>,
    limit: &'a LimitReport,
}

pub fn optimize(config: Option<&Path>, out: &Path) -> CliResult<()> {
    let (_, setup) = load(config)?;
    let pb = &setup.problem;
    let u0 = solver(project_uad(&setup.control, &pb.admissible))?;
    let run = solver(deep_quench_continuation(pb, &setup.schedule, &u0, &setup.options))?;
    let mut history = String::from("level,iter,cost,stationarity\n");
    for (k, level) in run.levels.iter().enumerate() {
        let csv = solver(trajectories_to_csv(&[("u", &level.u)]))?;
        write(out, &format!("control_{k}.csv"), &csv)?;
        for rec in &level.history {
            writeln!(
                history,
                "{k},{},{},{}",
                rec.iter,
                fmt_f64(rec.cost),
                fmt_f64(rec.stationarity)
            )
            .unwrap();
        }
    }
    write(out, "control_final.csv", &solver(trajectories_to_csv(&[("u", &run.control)]))?)?;
    write(out, "history.csv", &history)?;
    let report = OptimizeReport {
        schedule: &setup.schedule,
        all_converged: run.all_converged,
        levels: run.levels.iter().map(|l| &l.summary).collect(),
        limit: &run.limit,
    };
    write(out, "limit_report.json", &to_json(&report)?)?;

    let mut problems = Vec::new();
    if run.levels.iter().any(|l| l.summary.adjoint.pairing < 0.0) || run.limit.pairing < 0.0 {
        problems.push("negative complementarity pairing");
    }
    if !run.levels.iter().all(|l| pb.admissible.in_box(&l.u)) {
        problems.push("control left the admissible box");
    }
    if run
        .levels
        .iter()
        .any(|l| l.history.windows(2).any(|w| w[1].cost > w[0].cost))
    {
        problems.push("cost increased within a level");
    }
    let obstacle = &run.limit.obstacle_state;
    if obstacle.negative_mu_violation || obstacle.rho_bound_violation || obstacle.sign_violation {
        problems.push("obstacle state invariants violated");
    }
    if !problems.is_empty() {
        return Err(Failure::Invariant(problems.join("; ")));
    }
    Ok(())
}

pub fn sweep_alpha(config: Option<&Path>, alphas: &[f64], out: &Path) -> CliResult<()> {
    let (_, setup) = load(config)?;
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Failure::Config(Error::Config(
            "--alphas must be a nonempty list of values in (0, 1]".into(),
        )));
    }
    let pb = &setup.problem;
    let u = &setup.control;
    let limit = solver(pb.state(u, Level::Obstacle))?;
    let mut csv = String::from("alpha,rho_distance,mu_distance,xi_l6,energy_residual\n");
    let mut violated = !limit.invariants_hold();
    let mut rows = Vec::with_capacity(alphas.len() + 1);
    for &a in alphas {
        let sol = solver(pb.state(u, level_of(&setup, a)?))?;
        violated |= !sol.invariants_hold();
        let dr = solver(sol.rho.zip_map(&limit.rho, |x, y| x - y))?;
        let dm = solver(sol.mu.zip_map(&limit.mu, |x, y| x - y))?;
        rows.push((a, norm_l2_q(&dr), norm_l2_q(&dm), sol.diagnostics.xi_l6, sol.diagnostics.energy_residual));
    }
    rows.push((0.0, 0.0, 0.0, limit.diagnostics.xi_l6, limit.diagnostics.energy_residual));
    for (a, dr, dm, xi, en) in rows {
        writeln!(csv, "{},{},{},{},{}", fmt_f64(a), fmt_f64(dr), fmt_f64(dm), fmt_f64(xi), fmt_f64(en))
            .unwrap();
    }
    write(out, "sweep.csv", &csv)?;
    if violated {
        return Err(Failure::Invariant("state invariants violated during the sweep".into()));
    }
    Ok(())
}

pub fn verify(config: Option<&Path>, seed: Option<u64>) -> CliResult<()> {
    let (cfg, _) = load(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let report = run_suite(&cfg, seed).map_err(Failure::Config)?;
    print!("{}", report.table());
    let out = cfg.base_dir.join(&cfg.output);
    write(&out, "verify_report.json", &(report.to_json() + "\n"))?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Invariant("verification suite reported failures".into()))
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate { config, alpha, out } => simulate(config.as_deref(), *alpha, out),
        Command::Optimize { config, out } => optimize(config.as_deref(), out),
        Command::SweepAlpha { config, alphas, out } => sweep_alpha(config.as_deref(), alphas, out),
        Command::Verify { config, seed } => verify(config.as_deref(), *seed),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
