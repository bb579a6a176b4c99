//! `sweepctl`: solve, check and compare catalog problems from the command line.

mod config;
mod export;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sweep_core::catalog::{self, CatalogEntry};
use sweep_core::continuation::{compare_exact, run, SolveReport, StopReason};
use sweep_core::diagnostics::{check_field_forms, check_geometry, check_problem, check_trajectory, InvariantSummary};
use sweep_core::dynamics::PenalizedField;
use sweep_core::initialization::shifted_start;
use sweep_core::integrator::{integrate, PiecewiseControl};
use sweep_core::schedule::Ladder;

use config::RunConfig;

const EXIT_ERROR: u8 = 1;
const EXIT_MAX_LEVELS: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

/// γ values used by the geometry checks.
const CHECK_GAMMAS: [f64; 3] = [40.0, 80.0, 160.0];

#[derive(Parser)]
#[command(name = "sweepctl", version, about = "Penalty-continuation solver for controlled sweeping processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the continuation solver and write the report and trajectory.
    Solve(RunArgs),
    /// Run the geometry, constant and single-level trajectory checks.
    Check(RunArgs),
    /// Solve, then compare against the problem's known optimal trajectory.
    CompareExact(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Catalog problem key.
    #[arg(long)]
    problem: Option<String>,
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of control intervals.
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "rk4-step")]
    rk4_step: Option<f64>,
    #[arg(long = "max-levels")]
    max_levels: Option<usize>,
    /// Nelder-Mead evaluation budget per level.
    #[arg(long = "max-evals")]
    max_evals: Option<usize>,
    /// Wall-clock budget in seconds, checked between levels.
    #[arg(long = "time-budget")]
    time_budget: Option<f64>,
    /// Reject a starting γ at or below 2M/η instead of raising it.
    #[arg(long)]
    strict: bool,
    /// Start every level from the box midpoint.
    #[arg(long = "cold-start")]
    cold_start: bool,
    #[arg(long = "keep-every")]
    keep_every: Option<usize>,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
    /// Seed for diagnostic sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count for the geometry checks.
    #[arg(long)]
    samples: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            c.problem = Some(p.clone());
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(n => intervals, eps => eps, gamma0 => gamma0, delta => delta, rk4_step => rk4_step,
             max_levels => max_levels, keep_every => keep_every, output_dir => output_dir,
             seed => seed, samples => check_samples);
        if self.max_evals.is_some() {
            c.nelder_mead.max_evals = self.max_evals;
        }
        if self.time_budget.is_some() {
            c.time_budget_secs = self.time_budget;
        }
        c.strict |= self.strict;
        c.cold_start |= self.cold_start;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct Comparison {
    sup_distance: f64,
    cost_gap: f64,
    exact_cost: Option<f64>,
}

#[derive(Serialize)]
struct RunReport<'a> {
    version: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    solve: &'a SolveReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

#[derive(Serialize)]
struct CheckReport<'a> {
    version: &'static str,
    config: &'a RunConfig,
    gamma: f64,
    summary: &'a InvariantSummary,
}

fn lookup(cfg: &RunConfig) -> anyhow::Result<CatalogEntry> {
    Ok(catalog::lookup(cfg.problem_key()?)?)
}

fn output_path(cfg: &RunConfig, key: &str, suffix: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    Ok(cfg.output_dir.join(format!("{key}-{suffix}")))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn solve(cfg: &RunConfig) -> anyhow::Result<(CatalogEntry, SolveReport)> {
    let entry = lookup(cfg)?;
    if !entry.conforming {
        bail!(
            "problem `{}` violates the standing hypotheses and is available for `check` only",
            entry.key
        );
    }
    let report = run(&entry.problem, &cfg.solver_options())?;
    Ok((entry, report))
}

fn exit_for(report: &SolveReport) -> u8 {
    match report.stop_reason {
        StopReason::CostConverged => 0,
        StopReason::MaxLevels => EXIT_MAX_LEVELS,
        StopReason::Error => EXIT_ERROR,
    }
}

fn print_summary(report: &SolveReport) {
    for l in &report.levels {
        println!(
            "level {:>3}  gamma {:>8.3}  cost {:>12.8}  evals {:>7}  invariants {}",
            l.level.k,
            l.level.gamma,
            l.cost,
            l.evaluations,
            if l.invariants.passed { "ok" } else { "VIOLATED" }
        );
    }
    println!("stop: {:?}", report.stop_reason);
    if let Some(cost) = report.final_cost {
        println!("final cost: {cost:.10}");
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
}

fn write_outputs(
    cfg: &RunConfig,
    entry: &CatalogEntry,
    report: &SolveReport,
    comparison: Option<Comparison>,
    exact: bool,
) -> anyhow::Result<()> {
    let path = output_path(cfg, entry.key, "report.json")?;
    write_json(
        &path,
        &RunReport {
            version: sweep_core::VERSION,
            config: cfg,
            solve: report,
            comparison,
        },
    )?;
    log::info!("wrote {}", path.display());
    if let Some(traj) = &report.final_trajectory {
        let path = output_path(cfg, entry.key, if exact { "compare.csv" } else { "trajectory.csv" })?;
        let file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        let exact_fn = entry.exact.filter(|_| exact);
        let exact_ref = exact_fn.as_ref().map(|f| f as &dyn Fn(f64) -> Vec<f64>);
        export::write_trajectory(file, traj, exact_ref)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_solve(cfg: &RunConfig) -> anyhow::Result<u8> {
    let (entry, report) = solve(cfg)?;
    print_summary(&report);
    write_outputs(cfg, &entry, &report, None, false)?;
    Ok(exit_for(&report))
}

fn cmd_compare_exact(cfg: &RunConfig) -> anyhow::Result<u8> {
    let entry = lookup(cfg)?;
    let Some(exact) = entry.exact else {
        bail!(
            "problem `{}` has no registered exact solution; compare-exact supports: two-spheres",
            entry.key
        );
    };
    let (entry, report) = solve(cfg)?;
    print_summary(&report);
    let comparison = report.final_trajectory.as_ref().map(|traj| {
        let (sup_distance, cost_gap) = compare_exact(&entry.problem, traj, exact);
        println!("sup_distance: {sup_distance}");
        println!("cost_gap: {cost_gap}");
        Comparison {
            sup_distance,
            cost_gap,
            exact_cost: entry.exact_cost,
        }
    });
    write_outputs(cfg, &entry, &report, comparison, true)?;
    Ok(exit_for(&report))
}

fn cmd_check(cfg: &RunConfig) -> anyhow::Result<u8> {
    let entry = lookup(cfg)?;
    let problem = &entry.problem;
    let tol = &cfg.tolerances;
    let secondary = (cfg.check_samples / 10).max(1);

    let mut summary = check_geometry(problem.set(), &CHECK_GAMMAS, cfg.check_samples, cfg.seed, tol)
        .merge(check_field_forms(problem, &CHECK_GAMMAS, secondary, cfg.seed.wrapping_add(1), tol))
        .merge(check_problem(problem, secondary, cfg.seed.wrapping_add(2), tol));

    let mut ladder = Ladder::new(problem.penalty_constants(), cfg.gamma0, cfg.delta, 1, cfg.strict)?;
    let level = ladder.next().expect("one level")?;
    let options = cfg.solver_options();
    let start = shifted_start(problem, &level, tol)?;
    let control = PiecewiseControl::constant(problem.horizon(), cfg.intervals, &entry.nominal_control)?;
    let traj = integrate(
        &PenalizedField::new(problem, level),
        &control,
        &start.point,
        &options.level.integrator,
    )?;
    summary = summary.merge(check_trajectory(problem, &level, &traj, tol));

    for c in &summary.checks {
        println!(
            "{:<24} samples {:>7}  violations {:>5}  worst margin {:>12.4e}  {}",
            c.name,
            c.samples,
            c.violations,
            c.worst_margin,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    let path = output_path(cfg, entry.key, "check.json")?;
    write_json(
        &path,
        &CheckReport {
            version: sweep_core::VERSION,
            config: cfg,
            gamma: level.gamma,
            summary: &summary,
        },
    )?;
    Ok(if summary.passed { 0 } else { EXIT_CHECK_FAILED })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => args.resolve().and_then(|c| cmd_solve(&c)),
        Command::Check(args) => args.resolve().and_then(|c| cmd_check(&c)),
        Command::CompareExact(args) => args.resolve().and_then(|c| cmd_compare_exact(&c)),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
