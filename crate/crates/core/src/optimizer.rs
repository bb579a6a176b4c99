//! Direct shooting: minimize `g(x(T))` over stacked piecewise-constant
//! controls with a box-clamped Nelder-Mead search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlProblem, PenalizedField};
use crate::initialization::{shifted_start, ShiftedStart};
use crate::integrator::{integrate, terminal_state, IntegratorOptions, PiecewiseControl, Trajectory};
use crate::schedule::PenaltyLevel;
use crate::{Error, Result, ToleranceConfig};

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Default evaluation budget per free coordinate.
pub const EVALS_PER_DIM: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadOptions {
    /// Stop when `f_worst − f_best ≤ f_tol` ...
    pub f_tol: f64,
    /// ... and every vertex is within `x_tol` (max-norm) of the best one.
    pub x_tol: f64,
    /// Evaluation budget; `None` means `EVALS_PER_DIM · dim`.
    pub max_evals: Option<usize>,
    /// Initial simplex offsets as a fraction of each box width.
    pub initial_step: f64,
    /// Evaluate the initial simplex and shrink steps in parallel.
    pub parallel: bool,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-8,
            x_tol: 1e-6,
            max_evals: None,
            initial_step: 0.05,
            parallel: true,
        }
    }
}

/// Vertices and values of the working simplex, sorted best first.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState {
    pub vertices: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
}

impl SimplexState {
    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        self.vertices = order.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = order.iter().map(|&i| self.values[i]).collect();
    }

    pub fn spread(&self) -> f64 {
        self.values[self.values.len() - 1] - self.values[0]
    }

    /// Largest max-norm distance from the best vertex.
    pub fn diameter(&self) -> f64 {
        let best = &self.vertices[0];
        self.vertices[1..]
            .iter()
            .map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub best_history: Vec<f64>,
}

/// Minimizes `objective` over the box `[lo, hi]` starting from `start`.
///
/// Coordinates with `lo == hi` are frozen out of the search. Every trial
/// point is clamped to the box before evaluation; non-finite values count
/// as `+∞`.
pub fn nelder_mead<F>(objective: F, start: &[f64], lo: &[f64], hi: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = start.len();
    if lo.len() != n || hi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: lo.len().min(hi.len()),
        });
    }
    if let Some(i) = (0..n).find(|&i| !(start[i] >= lo[i] && start[i] <= hi[i])) {
        return Err(Error::ControlOutOfBox {
            index: i,
            value: start[i],
            lo: lo[i],
            hi: hi[i],
        });
    }
    let free: Vec<usize> = (0..n).filter(|&i| hi[i] > lo[i]).collect();
    let dim = free.len();
    let lo_free: Vec<f64> = free.iter().map(|&i| lo[i]).collect();
    let hi_free: Vec<f64> = free.iter().map(|&i| hi[i]).collect();

    let expand = |y: &[f64]| -> Vec<f64> {
        let mut x = start.to_vec();
        for (k, &i) in free.iter().enumerate() {
            x[i] = y[k];
        }
        x
    };
    let eval = |y: &[f64]| -> f64 {
        let v = objective(&expand(y));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let clamp = |y: &mut Vec<f64>| {
        for k in 0..dim {
            y[k] = y[k].clamp(lo_free[k], hi_free[k]);
        }
    };
    let eval_many = |points: &[Vec<f64>]| -> Vec<f64> {
        if opts.parallel {
            points.par_iter().map(|p| eval(p)).collect()
        } else {
            points.iter().map(|p| eval(p)).collect()
        }
    };

    let y0: Vec<f64> = free.iter().map(|&i| start[i]).collect();
    if dim == 0 {
        let v = eval(&y0);
        return Ok(NelderMeadOutcome {
            best: start.to_vec(),
            best_value: v,
            evaluations: 1,
            iterations: 0,
            converged: true,
            best_history: vec![v],
        });
    }
    let max_evals = opts.max_evals.unwrap_or(EVALS_PER_DIM * dim);

    let axis_points = |center: &[f64]| -> Vec<Vec<f64>> {
        (0..dim)
            .map(|k| {
                let step = opts.initial_step * (hi_free[k] - lo_free[k]);
                let mut v = center.to_vec();
                v[k] = if v[k] + step <= hi_free[k] { v[k] + step } else { v[k] - step };
                v
            })
            .collect()
    };

    let mut vertices = vec![y0.clone()];
    vertices.extend(axis_points(&y0));
    let values = eval_many(&vertices);
    let mut simplex = SimplexState {
        vertices,
        values,
        iterations: 0,
        evaluations: dim + 1,
    };
    simplex.sort();
    let mut history = Vec::new();
    let mut converged = false;
    // Best value at the last rebuild of the simplex.
    let mut anchor: Option<f64> = None;

    while simplex.evaluations < max_evals {
        if simplex.spread() <= opts.f_tol && simplex.diameter() <= opts.x_tol {
            if anchor.is_some_and(|a| simplex.values[0] >= a - opts.f_tol) {
                converged = true;
                break;
            }
            // Clamping can collapse the simplex onto a face of the box, so a
            // claimed minimum is re-tested from a fresh simplex around it.
            anchor = Some(simplex.values[0]);
            let fresh = axis_points(&simplex.vertices[0]);
            let values = eval_many(&fresh);
            simplex.evaluations += dim;
            for (k, (p, v)) in fresh.into_iter().zip(values).enumerate() {
                simplex.vertices[k + 1] = p;
                simplex.values[k + 1] = v;
            }
            simplex.sort();
            continue;
        }
        simplex.iterations += 1;
        let worst = dim;
        let mut centroid = vec![0.0; dim];
        for v in &simplex.vertices[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }
        let along = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex.vertices[worst])
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            clamp(&mut p);
            p
        };

        let reflected = along(REFLECTION);
        let f_r = eval(&reflected);
        simplex.evaluations += 1;
        let f_best = simplex.values[0];
        let f_second = simplex.values[worst - 1];
        let f_worst = simplex.values[worst];

        let mut accepted: Option<(Vec<f64>, f64)> = None;
        if f_r < f_best {
            let expanded = along(REFLECTION * EXPANSION);
            let f_e = eval(&expanded);
            simplex.evaluations += 1;
            accepted = Some(if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) });
        } else if f_r < f_second {
            accepted = Some((reflected, f_r));
        } else if f_r < f_worst {
            let outside = along(REFLECTION * CONTRACTION);
            let f_oc = eval(&outside);
            simplex.evaluations += 1;
            if f_oc <= f_r {
                accepted = Some((outside, f_oc));
            }
        } else {
            let inside = along(-CONTRACTION);
            let f_ic = eval(&inside);
            simplex.evaluations += 1;
            if f_ic < f_worst {
                accepted = Some((inside, f_ic));
            }
        }

        match accepted {
            Some((point, value)) => {
                simplex.vertices[worst] = point;
                simplex.values[worst] = value;
            }
            None => {
                let best = simplex.vertices[0].clone();
                let shrunk: Vec<Vec<f64>> = simplex.vertices[1..]
                    .iter()
                    .map(|v| {
                        let mut p: Vec<f64> = best.iter().zip(v).map(|(b, x)| b + SHRINK * (x - b)).collect();
                        clamp(&mut p);
                        p
                    })
                    .collect();
                let values = eval_many(&shrunk);
                simplex.evaluations += shrunk.len();
                for (k, (p, v)) in shrunk.into_iter().zip(values).enumerate() {
                    simplex.vertices[k + 1] = p;
                    simplex.values[k + 1] = v;
                }
            }
        }
        simplex.sort();
        history.push(simplex.values[0]);
    }

    Ok(NelderMeadOutcome {
        best: expand(&simplex.vertices[0]),
        best_value: simplex.values[0],
        evaluations: simplex.evaluations,
        iterations: simplex.iterations,
        converged,
        best_history: history,
    })
}

/// `g(x(T))` for the penalized dynamics started at `start`; integration
/// failures map to `+∞`.
pub fn objective(field: &PenalizedField<'_>, ctrl: &PiecewiseControl, start: &[f64], opts: &IntegratorOptions) -> f64 {
    match terminal_state(field, ctrl, start, opts) {
        Ok(end) => {
            let v = field.problem().terminal_cost(&end.state);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Options for one inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelOptions {
    pub integrator: IntegratorOptions,
    pub nelder_mead: NelderMeadOptions,
    pub tolerances: ToleranceConfig,
}

/// Solution of the discretized penalized problem at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolveResult {
    pub level: PenaltyLevel,
    pub start: ShiftedStart,
    pub best_control: PiecewiseControl,
    pub best_cost: f64,
    pub trajectory: Trajectory,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the level's problem over `intervals` piecewise-constant controls,
/// starting the simplex at `warm` or at the box midpoint.
pub fn solve_level(
    problem: &ControlProblem,
    level: PenaltyLevel,
    intervals: usize,
    warm: Option<&PiecewiseControl>,
    opts: &LevelOptions,
) -> Result<InnerSolveResult> {
    if intervals == 0 {
        return Err(Error::InvalidArgument("at least one control interval is required".into()));
    }
    let start = shifted_start(problem, &level, &opts.tolerances)?;
    let bounds = problem.control_box();
    let m = problem.control_dim();
    let horizon = problem.horizon();
    let initial = match warm {
        Some(w) if w.intervals() == intervals && w.control_dim() == m => {
            let mut stack = w.as_stack().to_vec();
            for j in 0..intervals {
                bounds.clamp(&mut stack[j * m..(j + 1) * m]);
            }
            stack
        }
        Some(w) => {
            return Err(Error::InvalidArgument(format!(
                "warm start has {} intervals of dimension {}, expected {intervals} of dimension {m}",
                w.intervals(),
                w.control_dim()
            )))
        }
        None => bounds.midpoint().repeat(intervals),
    };
    let lo = bounds.lo().repeat(intervals);
    let hi = bounds.hi().repeat(intervals);
    let field = PenalizedField::new(problem, level);
    let x_start = &start.point;
    let cost = |stack: &[f64]| -> f64 {
        match PiecewiseControl::from_stack(horizon, m, stack.to_vec()) {
            Ok(ctrl) => objective(&field, &ctrl, x_start, &opts.integrator),
            Err(_) => f64::INFINITY,
        }
    };
    let outcome = nelder_mead(cost, &initial, &lo, &hi, &opts.nelder_mead)?;
    let best_control = PiecewiseControl::from_stack(horizon, m, outcome.best)?;
    let trajectory = integrate(&field, &best_control, x_start, &opts.integrator)?;
    let best_cost = problem.terminal_cost(trajectory.terminal_state());
    log::info!(
        "gamma = {:.4}: cost {best_cost:.6} after {} evaluations (converged: {})",
        level.gamma,
        outcome.evaluations,
        outcome.converged
    );
    Ok(InnerSolveResult {
        level,
        start,
        best_control,
        best_cost,
        trajectory,
        evaluations: outcome.evaluations,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}
