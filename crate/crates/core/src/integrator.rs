//! Fixed-step classical RK4 under piecewise-constant controls.
//!
//! The horizon is split into `N` equal control intervals; each interval is
//! integrated with an integer number of equal substeps so no RK4 stage
//! straddles a control switch. An interval whose state turns non-finite is
//! retried from its initial state with the substep halved, up to
//! [`IntegratorOptions::max_halvings`] times.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlBox, PenalizedField};
use crate::{Error, Result};

/// Controls constant on `[jh, (j+1)h)`, `h = T/N`, stored as one stacked
/// vector of `N·m` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseControl {
    horizon: f64,
    control_dim: usize,
    values: Vec<f64>,
}

impl PiecewiseControl {
    pub fn from_stack(horizon: f64, control_dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if control_dim == 0 || values.is_empty() || values.len() % control_dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} control values do not split into vectors of dimension {control_dim}",
                values.len()
            )));
        }
        Ok(Self {
            horizon,
            control_dim,
            values,
        })
    }

    pub fn new(horizon: f64, values: &[Vec<f64>]) -> Result<Self> {
        let m = values.first().map_or(0, Vec::len);
        if let Some(bad) = values.iter().find(|v| v.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: bad.len(),
            });
        }
        Self::from_stack(horizon, m, values.concat())
    }

    /// The same control vector on all `intervals` intervals.
    pub fn constant(horizon: f64, intervals: usize, u: &[f64]) -> Result<Self> {
        Self::from_stack(horizon, u.len(), u.repeat(intervals))
    }

    pub fn intervals(&self) -> usize {
        self.values.len() / self.control_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn interval_len(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    /// Control vector on interval `j` (0-based).
    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.control_dim..(j + 1) * self.control_dim]
    }

    /// Control in effect at time `t`; `t = T` maps to the last interval.
    pub fn at(&self, t: f64) -> &[f64] {
        let j = ((t / self.interval_len()).floor().max(0.0) as usize).min(self.intervals() - 1);
        self.value(j)
    }

    pub fn as_stack(&self) -> &[f64] {
        &self.values
    }

    pub fn into_stack(self) -> Vec<f64> {
        self.values
    }

    /// Splits every interval into `factor` equal pieces carrying the same value.
    pub fn refine(&self, factor: usize) -> Self {
        let values = (0..self.intervals())
            .flat_map(|j| self.value(j).repeat(factor.max(1)))
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn check(&self, bounds: &ControlBox) -> Result<()> {
        (0..self.intervals()).try_for_each(|j| bounds.check(self.value(j)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    /// Target RK4 substep; each interval uses `round(h/step)` equal substeps.
    pub step: f64,
    /// Retain every `keep_every`-th substep; interval endpoints are always kept.
    pub keep_every: usize,
    pub max_halvings: u32,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            keep_every: 1,
            max_halvings: 3,
        }
    }
}

/// One retained state with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: Vec<f64>,
    pub psi_smooth: f64,
    pub xi_total: f64,
    pub field_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Field evaluations in which some exponent hit the clamp.
    pub clamp_count: u64,
    /// Intervals re-integrated with a halved substep.
    pub retries: u32,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn terminal_state(&self) -> &[f64] {
        &self.samples.last().expect("trajectories are never empty").state
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Terminal state of an integration without stored samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalState {
    pub state: Vec<f64>,
    pub clamp_count: u64,
    pub retries: u32,
}

/// Scratch buffers for [`rk4_step`].
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// One classical RK4 step of the autonomous system `x' = F(x)` in place.
pub fn rk4_step<F: FnMut(&[f64], &mut [f64])>(mut field: F, x: &mut [f64], h: f64, ws: &mut Rk4Workspace) {
    let Rk4Workspace { k1, k2, k3, k4, tmp } = ws;
    field(x, k1);
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    field(tmp, k2);
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    field(tmp, k3);
    for i in 0..x.len() {
        tmp[i] = x[i] + h * k3[i];
    }
    field(tmp, k4);
    for i in 0..x.len() {
        x[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    }
}

/// Integrates the penalized dynamics and keeps every `keep_every`-th substep.
pub fn integrate(
    field: &PenalizedField<'_>,
    ctrl: &PiecewiseControl,
    start: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let n = field.dim();
    let mut scratch = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut sample = |t: f64, x: &[f64], u: &[f64]| {
        let (psi_smooth, xi_total, field_norm) = field.sample_diagnostics(x, u, &mut scratch, &mut out);
        Sample {
            t,
            state: x.to_vec(),
            psi_smooth,
            xi_total,
            field_norm,
        }
    };
    let mut samples = vec![sample(0.0, start, ctrl.value(0))];
    let keep = opts.keep_every.max(1);
    let mut pending = Vec::new();
    let stats = drive(field, ctrl, start, opts, |event| match event {
        Event::Restart => pending.clear(),
        Event::Substep { t, x, u, index, last } => {
            if last || (index + 1) % keep == 0 {
                pending.push(sample(t, x, u));
            }
        }
        Event::IntervalDone => samples.append(&mut pending),
    })?;
    Ok(Trajectory {
        samples,
        clamp_count: stats.clamp_count,
        retries: stats.retries,
    })
}

/// Integrates without recording; the objective's fast path.
pub fn terminal_state(
    field: &PenalizedField<'_>,
    ctrl: &PiecewiseControl,
    start: &[f64],
    opts: &IntegratorOptions,
) -> Result<TerminalState> {
    let stats = drive(field, ctrl, start, opts, |_| {})?;
    Ok(stats)
}

enum Event<'x> {
    Restart,
    Substep {
        t: f64,
        x: &'x [f64],
        u: &'x [f64],
        index: usize,
        last: bool,
    },
    IntervalDone,
}

fn drive<S>(
    field: &PenalizedField<'_>,
    ctrl: &PiecewiseControl,
    start: &[f64],
    opts: &IntegratorOptions,
    mut sink: S,
) -> Result<TerminalState>
where
    S: FnMut(Event<'_>),
{
    let n = field.dim();
    if start.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: start.len(),
        });
    }
    let problem = field.problem();
    if ctrl.control_dim() != problem.control_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.control_dim(),
            found: ctrl.control_dim(),
        });
    }
    ctrl.check(problem.control_box())?;
    let h = ctrl.interval_len();
    if !(opts.step > 0.0) || opts.step > h * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "RK4 step {} must be positive and at most the interval length {h}",
            opts.step
        )));
    }
    let base_count = ((h / opts.step).round() as usize).max(1);

    let mut ws = Rk4Workspace::new(n);
    let mut scratch = vec![0.0; n];
    let mut x = start.to_vec();
    let mut trial = vec![0.0; n];
    let mut clamp_count = 0u64;
    let mut retries = 0u32;
    let intervals = ctrl.intervals();

    for j in 0..intervals {
        let u = ctrl.value(j);
        let t0 = j as f64 * h;
        let t1 = if j + 1 == intervals { ctrl.horizon() } else { (j + 1) as f64 * h };
        let mut halvings = 0;
        loop {
            let count = base_count << halvings;
            let sub = h / count as f64;
            trial.copy_from_slice(&x);
            let mut clamps = 0u64;
            let mut failed_at = None;
            for i in 0..count {
                rk4_step(
                    |y, dy| {
                        let s = field.eval_into(y, u, dy, &mut scratch);
                        clamps += u64::from(s.clamped > 0);
                    },
                    &mut trial,
                    sub,
                    &mut ws,
                );
                let last = i + 1 == count;
                let t = if last { t1 } else { t0 + (i + 1) as f64 * sub };
                if trial.iter().any(|v| !v.is_finite()) {
                    failed_at = Some(t);
                    break;
                }
                sink(Event::Substep {
                    t,
                    x: &trial,
                    u,
                    index: i,
                    last,
                });
            }
            match failed_at {
                None => {
                    clamp_count += clamps;
                    x.copy_from_slice(&trial);
                    sink(Event::IntervalDone);
                    break;
                }
                Some(time) if halvings >= opts.max_halvings => {
                    return Err(Error::NonFiniteState {
                        time,
                        last_state: x.clone(),
                    });
                }
                Some(time) => {
                    halvings += 1;
                    retries += 1;
                    log::debug!("non-finite state at t = {time}; retrying interval {j} with {halvings} halvings");
                    sink(Event::Restart);
                }
            }
        }
    }
    Ok(TerminalState {
        state: x,
        clamp_count,
        retries,
    })
}
