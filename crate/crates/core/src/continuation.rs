//! The outer γ-continuation loop.
//!
//! Levels 0 and 1 are always solved. After that γ grows by δ per level
//! until two consecutive optimal costs differ by at most ε, or the level
//! budget runs out. Each level warm-starts its simplex from the previous
//! level's best control unless `cold_start` is set.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{check_trajectory, InvariantSummary};
use crate::dynamics::ControlProblem;
use crate::integrator::{PiecewiseControl, Trajectory};
use crate::linalg;
use crate::optimizer::{solve_level, InnerSolveResult, LevelOptions};
use crate::schedule::{distance_sq_bound, GammaRaise, Ladder, PenaltyLevel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationOptions {
    /// Number of control intervals `N`.
    pub intervals: usize,
    pub eps: f64,
    pub gamma0: f64,
    pub delta: f64,
    pub max_levels: usize,
    /// Reject a starting γ at or below `2M/η` instead of raising it.
    pub strict: bool,
    /// Start every level's simplex from the box midpoint.
    pub cold_start: bool,
    /// Optional wall-clock budget in seconds, checked between levels.
    pub time_budget_secs: Option<f64>,
    pub level: LevelOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            intervals: 20,
            eps: 0.01,
            gamma0: 20.0,
            delta: 10.0,
            max_levels: 200,
            strict: false,
            cold_start: false,
            time_budget_secs: None,
            level: LevelOptions::default(),
        }
    }
}

impl ContinuationOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.intervals == 0 {
            return bad("N must be at least 1".into());
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.gamma0 > 0.0) {
            return bad(format!("gamma0 must be positive, got {}", self.gamma0));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.max_levels < 2 {
            return bad("max_levels must be at least 2".into());
        }
        if !(self.level.integrator.step > 0.0) {
            return bad(format!("rk4 step must be positive, got {}", self.level.integrator.step));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    CostConverged,
    MaxLevels,
    Error,
}

/// Outcome of one level, as recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: PenaltyLevel,
    pub cost: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub start: Vec<f64>,
    pub shift_not_absorbed: bool,
    pub clamp_count: u64,
    pub retries: u32,
    pub invariants: InvariantSummary,
    /// Squared sup-distance bound to the exact trajectory; `None` on overflow.
    pub distance_sq_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: String,
    pub levels: Vec<LevelRecord>,
    pub final_cost: Option<f64>,
    pub final_control: Option<PiecewiseControl>,
    #[serde(skip)]
    pub final_trajectory: Option<Trajectory>,
    pub stop_reason: StopReason,
    pub error: Option<String>,
    pub gamma_raise: Option<GammaRaise>,
    pub wall_time_secs: f64,
}

impl SolveReport {
    /// `g_k` for every solved level.
    pub fn cost_trace(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.cost).collect()
    }

    pub fn final_gamma(&self) -> Option<f64> {
        self.levels.last().map(|l| l.level.gamma)
    }
}

/// Runs the continuation loop. Precondition failures (invalid options,
/// strict-mode γ) return `Err`; a failure inside a level ends the run with
/// [`StopReason::Error`] and the levels solved so far.
pub fn run(problem: &ControlProblem, opts: &ContinuationOptions) -> Result<SolveReport> {
    opts.validate()?;
    let started = Instant::now();
    let budget = opts.time_budget_secs.map(Duration::from_secs_f64);
    let constants = problem.penalty_constants();
    let ladder = Ladder::new(constants, opts.gamma0, opts.delta, opts.max_levels, opts.strict)?;
    let gamma_raise = ladder.raise();

    let mut report = SolveReport {
        problem: problem.name().to_string(),
        levels: Vec::new(),
        final_cost: None,
        final_control: None,
        final_trajectory: None,
        stop_reason: StopReason::MaxLevels,
        error: None,
        gamma_raise,
        wall_time_secs: 0.0,
    };
    let mut last: Option<InnerSolveResult> = None;

    for level in ladder {
        let k = report.levels.len();
        if k >= 2 {
            if let Some(limit) = budget {
                if started.elapsed() >= limit {
                    log::warn!("time budget exhausted after {k} levels");
                    break;
                }
            }
        }
        let solved = level.and_then(|level| {
            let warm = if opts.cold_start { None } else { last.as_ref().map(|r| &r.best_control) };
            solve_level(problem, level, opts.intervals, warm, &opts.level)
        });
        let result = match solved {
            Ok(r) => r,
            Err(e) => {
                log::error!("level {k} failed: {e}");
                report.stop_reason = StopReason::Error;
                report.error = Some(e.to_string());
                break;
            }
        };
        let invariants = check_trajectory(problem, &result.level, &result.trajectory, &opts.level.tolerances);
        report.levels.push(LevelRecord {
            level: result.level,
            cost: result.best_cost,
            evaluations: result.evaluations,
            iterations: result.iterations,
            converged: result.converged,
            start: result.start.point.clone(),
            shift_not_absorbed: result.start.shift_not_absorbed,
            clamp_count: result.trajectory.clamp_count,
            retries: result.trajectory.retries,
            invariants,
            distance_sq_bound: distance_sq_bound(&constants, &result.level, problem.horizon()),
        });
        last = Some(result);

        let n = report.levels.len();
        if n >= 2 {
            let diff = (report.levels[n - 1].cost - report.levels[n - 2].cost).abs();
            if diff <= opts.eps {
                report.stop_reason = StopReason::CostConverged;
                break;
            }
        }
    }

    if let Some(result) = last {
        report.final_cost = Some(result.best_cost);
        report.final_control = Some(result.best_control);
        report.final_trajectory = Some(result.trajectory);
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Sup-distance between trajectory samples and `exact`, and the terminal cost gap.
pub fn compare_exact(
    problem: &ControlProblem,
    trajectory: &Trajectory,
    exact: impl Fn(f64) -> Vec<f64>,
) -> (f64, f64) {
    let sup = trajectory
        .samples
        .iter()
        .map(|s| linalg::distance(&s.state, &exact(s.t)))
        .fold(0.0, f64::max);
    let end = trajectory.samples.last().map_or(problem.horizon(), |s| s.t);
    let gap = (problem.terminal_cost(trajectory.terminal_state()) - problem.terminal_cost(&exact(end))).abs();
    (sup, gap)
}
