//! Control problems and the penalized dynamics
//!
//! ```text
//! x' = f(x, u) − Σᵢ γ e^{γψᵢ(x)} ∇ψᵢ(x)  =  f(x, u) − γ e^{γψ_γ(x)} ∇ψ_γ(x).
//! ```

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{self, SweepingSet};
use crate::linalg::norm;
use crate::schedule::{PenaltyConstants, PenaltyLevel};
use crate::{Error, Result};

/// Free dynamics `f(x, u)`, written into the output slice.
pub type VectorField = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Terminal cost `g(x)`.
pub type TerminalCost = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Axis-aligned control set `U = Π [loⱼ, hiⱼ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ControlBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidArgument("control dimension must be positive".into()));
        }
        if let Some(j) = (0..lo.len()).find(|&j| !(lo[j] <= hi[j]) || !lo[j].is_finite() || !hi[j].is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "control bounds invalid at coordinate {j}: [{}, {}]",
                lo[j], hi[j]
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for ((x, l), h) in u.iter_mut().zip(&self.lo).zip(&self.hi) {
            *x = x.clamp(*l, *h);
        }
    }

    pub fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        for (index, &value) in u.iter().enumerate() {
            let (lo, hi) = (self.lo[index], self.hi[index]);
            if !(value >= lo && value <= hi) {
                return Err(Error::ControlOutOfBox { index, value, lo, hi });
            }
        }
        Ok(())
    }
}

/// Fixed-horizon Mayer problem over a controlled sweeping process.
#[derive(Clone)]
pub struct ControlProblem {
    name: String,
    f: VectorField,
    g: TerminalCost,
    control_box: ControlBox,
    horizon: f64,
    x0: Vec<f64>,
    set: SweepingSet,
    bound_m: f64,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("control_box", &self.control_box)
            .field("horizon", &self.horizon)
            .field("x0", &self.x0)
            .field("set", &self.set)
            .field("bound_m", &self.bound_m)
            .finish()
    }
}

impl ControlProblem {
    /// Validates `x0 ∈ C` (within `x0_tol`), `T > 0` and `M > 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        f: VectorField,
        g: TerminalCost,
        control_box: ControlBox,
        horizon: f64,
        x0: Vec<f64>,
        set: SweepingSet,
        bound_m: f64,
        x0_tol: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if !(bound_m > 0.0) {
            return Err(Error::InvalidArgument(format!("bound M must be positive, got {bound_m}")));
        }
        let psi_max = set.psi_max(&x0)?;
        if psi_max > x0_tol {
            return Err(Error::InitialPointOutsideC { psi_max });
        }
        Ok(Self {
            name: name.into(),
            f,
            g,
            control_box,
            horizon,
            x0,
            set,
            bound_m,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    pub fn control_dim(&self) -> usize {
        self.control_box.dim()
    }

    pub fn control_box(&self) -> &ControlBox {
        &self.control_box
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn set(&self) -> &SweepingSet {
        &self.set
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn penalty_constants(&self) -> PenaltyConstants {
        let c = self.set.constants();
        PenaltyConstants {
            bound_m: self.bound_m,
            eta: c.eta,
            m_psi: c.m_psi,
            r: self.set.len(),
        }
    }

    /// `M + 2M M̄ψ/η`, the velocity bound of the penalized flow.
    pub fn velocity_bound(&self) -> f64 {
        let c = self.set.constants();
        self.bound_m + 2.0 * self.bound_m * c.m_bar_psi / c.eta
    }

    pub fn free_dynamics(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.set.check_dim(x)?;
        self.control_box.check(u)?;
        let mut out = vec![0.0; x.len()];
        (self.f)(x, u, &mut out);
        Ok(out)
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }
}

/// Per-evaluation statistics of the penalized field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldStats {
    pub xi_total: f64,
    pub clamped: usize,
}

/// The penalized vector field at one penalty level.
#[derive(Debug, Clone, Copy)]
pub struct PenalizedField<'a> {
    problem: &'a ControlProblem,
    level: PenaltyLevel,
}

impl<'a> PenalizedField<'a> {
    pub fn new(problem: &'a ControlProblem, level: PenaltyLevel) -> Self {
        Self { problem, level }
    }

    pub fn problem(&self) -> &'a ControlProblem {
        self.problem
    }

    pub fn level(&self) -> &PenaltyLevel {
        &self.level
    }

    pub fn dim(&self) -> usize {
        self.problem.state_dim()
    }

    /// `f(x, u) − Σᵢ ξⁱ(x) ∇ψᵢ(x)`.
    pub fn field_multi(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.problem.set.check_dim(x)?;
        self.problem.control_box.check(u)?;
        let mut out = vec![0.0; x.len()];
        let mut scratch = vec![0.0; x.len()];
        self.eval_into(x, u, &mut out, &mut scratch);
        Ok(out)
    }

    /// `f(x, u) − ξ(x) ∇ψ_γ(x)` with `ξ = Σᵢ ξⁱ`.
    pub fn field_smooth(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.problem.free_dynamics(x, u)?;
        let set = &self.problem.set;
        let xi = set.penalty_weights(self.level.gamma, x)?;
        let grad = set.psi_smooth_grad(self.level.gamma, x)?;
        for (o, g) in out.iter_mut().zip(&grad) {
            *o -= xi.total * g;
        }
        Ok(out)
    }

    /// Unchecked hot path of [`field_multi`](Self::field_multi). `scratch`
    /// must have the state dimension.
    #[inline]
    pub fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64], scratch: &mut [f64]) -> FieldStats {
        (self.problem.f)(x, u, out);
        let gamma = self.level.gamma;
        let mut stats = FieldStats::default();
        for c in self.problem.set.components() {
            let (xi, hit) = geometry::penalty_weight(gamma, c.value(x));
            stats.xi_total += xi;
            stats.clamped += usize::from(hit);
            if xi != 0.0 {
                c.gradient(x, scratch);
                for (o, g) in out.iter_mut().zip(scratch.iter()) {
                    *o -= xi * g;
                }
            }
        }
        stats
    }

    /// Field norm, `ψ_γ` and `ξ` at one state, for trajectory diagnostics.
    pub(crate) fn sample_diagnostics(&self, x: &[f64], u: &[f64], scratch: &mut [f64], out: &mut [f64]) -> (f64, f64, f64) {
        let stats = self.eval_into(x, u, out, scratch);
        let smooth = self.problem.set.psi_smooth_unchecked(self.level.gamma, x);
        (smooth, stats.xi_total, norm(out))
    }
}
