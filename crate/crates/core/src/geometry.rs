//! Sweeping sets `C = ∩ᵢ {ψᵢ ≤ 0}` and the smoothed quantities derived from them.
//!
//! The smoothed maximum is the log-sum-exp
//!
//! ```text
//! ψ_γ(x) = (1/γ) ln Σᵢ e^{γψᵢ(x)},      max ψ ≤ ψ_γ ≤ max ψ + ln(r)/γ,
//! ```
//!
//! always evaluated shifted by `m = maxᵢ ψᵢ(x)` so no intermediate overflows
//! for any `γ`. Its gradient is the softmax-weighted average of the `∇ψᵢ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Exponents `γψᵢ` are clamped to this value before exponentiation in the
/// penalty weights, keeping the vector field finite when an RK4 stage
/// leaves the set.
pub const EXP_CAP: f64 = 30.0;

/// A `C^{1,1}` function `ψ: Rⁿ → R` with its gradient.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇ψ(x)` into `out` (length `dim()`).
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

/// `ψ(x) = ‖x − c‖² − R²`, the closed ball of radius `R` around `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }
}

impl SmoothFunction for Ball {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let sq: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        sq - self.radius * self.radius
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = 2.0 * (a - c);
        }
    }
}

/// `ψ(x) = ⟨a, x⟩ − b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }
}

impl SmoothFunction for HalfSpace {
    fn dim(&self) -> usize {
        self.normal.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.normal, x) - self.offset
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.normal);
    }
}

/// User-certified constants of the sweeping set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetConstants {
    /// Convex combinations of active gradients have norm `> 2η`.
    pub eta: f64,
    /// Half the common Lipschitz constant of the gradients on `conv C`.
    pub m_psi: f64,
    /// Common bound of the gradients on `C`; at least `2η`.
    pub m_bar_psi: f64,
}

/// Axis-aligned box used to draw diagnostic samples around `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Where a point sits in the nested family `C^γ(k) ⊂ C^γ ⊂ C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Membership {
    /// `ψ_γ(x) ≤ −α`.
    InCk,
    /// `ψ_γ(x) ≤ 0`.
    InCgamma,
    /// `max ψᵢ(x) ≤ 0`.
    InC,
    Outside,
}

/// Penalty multipliers `ξⁱ = γ e^{γψᵢ}` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    pub total: f64,
    pub per_component: Vec<f64>,
    /// Number of components whose exponent hit [`EXP_CAP`].
    pub clamped: usize,
}

/// The sweeping set `C = ∩ᵢ {ψᵢ ≤ 0}`.
#[derive(Clone)]
pub struct SweepingSet {
    components: Vec<Arc<dyn SmoothFunction>>,
    dim: usize,
    constants: SetConstants,
    sample_region: Option<SampleRegion>,
}

impl fmt::Debug for SweepingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SweepingSet")
            .field("components", &self.components.len())
            .field("dim", &self.dim)
            .field("constants", &self.constants)
            .finish()
    }
}

impl SweepingSet {
    pub fn new(components: Vec<Arc<dyn SmoothFunction>>, constants: SetConstants) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("a sweeping set needs at least one function".into()))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        if let Some(bad) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let SetConstants {
            eta,
            m_psi,
            m_bar_psi,
        } = constants;
        if !(eta > 0.0 && m_psi > 0.0 && m_bar_psi > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "set constants must be positive: eta={eta}, m_psi={m_psi}, m_bar_psi={m_bar_psi}"
            )));
        }
        if m_bar_psi < 2.0 * eta {
            return Err(Error::InvalidArgument(format!(
                "m_bar_psi = {m_bar_psi} must be at least 2*eta = {}",
                2.0 * eta
            )));
        }
        Ok(Self {
            components,
            dim,
            constants,
            sample_region: None,
        })
    }

    pub fn with_sample_region(mut self, region: SampleRegion) -> Result<Self> {
        self.check_dim(&region.lo)?;
        self.check_dim(&region.hi)?;
        self.sample_region = Some(region);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of constraint functions `r`.
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn constants(&self) -> SetConstants {
        self.constants
    }

    pub fn components(&self) -> &[Arc<dyn SmoothFunction>] {
        &self.components
    }

    pub fn sample_region(&self) -> Option<&SampleRegion> {
        self.sample_region.as_ref()
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `ψᵢ(x)` for every component.
    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.components.iter().map(|c| c.value(x)).collect())
    }

    /// `∇ψᵢ(x)` for component `i`.
    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let c = self
            .components
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("component index {i} out of range")))?;
        let mut g = vec![0.0; self.dim];
        c.gradient(x, &mut g);
        Ok(g)
    }

    /// `max ψᵢ(x)`; `x ∈ C` iff the result is `≤ 0`.
    pub fn psi_max(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.psi_max_unchecked(x))
    }

    pub(crate) fn psi_max_unchecked(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| c.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `ψ_γ(x) = (1/γ) ln Σᵢ e^{γψᵢ(x)}`.
    pub fn psi_smooth(&self, gamma: f64, x: &[f64]) -> Result<f64> {
        check_gamma(gamma)?;
        self.check_dim(x)?;
        Ok(self.psi_smooth_unchecked(gamma, x))
    }

    pub(crate) fn psi_smooth_unchecked(&self, gamma: f64, x: &[f64]) -> f64 {
        if self.components.len() == 1 {
            return self.components[0].value(x);
        }
        let mut values = [0.0; 16];
        if self.components.len() <= values.len() {
            let values = &mut values[..self.components.len()];
            for (v, c) in values.iter_mut().zip(&self.components) {
                *v = c.value(x);
            }
            log_sum_exp(gamma, values)
        } else {
            let values: Vec<f64> = self.components.iter().map(|c| c.value(x)).collect();
            log_sum_exp(gamma, &values)
        }
    }

    /// Softmax weights `wᵢ = e^{γ(ψᵢ−m)} / Σⱼ e^{γ(ψⱼ−m)}`.
    pub fn softmax_weights(&self, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_gamma(gamma)?;
        let values = self.values(x)?;
        Ok(softmax(gamma, &values))
    }

    /// `∇ψ_γ(x) = Σᵢ wᵢ ∇ψᵢ(x)` with softmax weights `wᵢ`.
    pub fn psi_smooth_grad(&self, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
        let weights = self.softmax_weights(gamma, x)?;
        let mut out = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for (w, c) in weights.iter().zip(&self.components) {
            c.gradient(x, &mut g);
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += w * gi;
            }
        }
        Ok(out)
    }

    /// `ξⁱ = γ e^{min(γψᵢ, EXP_CAP)}` and their sum.
    pub fn penalty_weights(&self, gamma: f64, x: &[f64]) -> Result<PenaltyWeights> {
        check_gamma(gamma)?;
        self.check_dim(x)?;
        let mut clamped = 0;
        let per_component: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let (xi, hit) = penalty_weight(gamma, c.value(x));
                clamped += usize::from(hit);
                xi
            })
            .collect();
        Ok(PenaltyWeights {
            total: per_component.iter().sum(),
            per_component,
            clamped,
        })
    }

    /// Deepest member of `C^γ(k) ⊂ C^γ ⊂ C` containing `x`.
    pub fn membership(&self, gamma: f64, alpha: f64, x: &[f64]) -> Result<Membership> {
        check_gamma(gamma)?;
        if !(alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {alpha}")));
        }
        self.check_dim(x)?;
        let smooth = self.psi_smooth_unchecked(gamma, x);
        Ok(if smooth <= -alpha {
            Membership::InCk
        } else if smooth <= 0.0 {
            Membership::InCgamma
        } else if self.psi_max_unchecked(x) <= 0.0 {
            Membership::InC
        } else {
            Membership::Outside
        })
    }

    /// Indices (0-based) of the constraints with `|ψᵢ(x)| ≤ tol`.
    pub fn active_indices(&self, x: &[f64], tol: f64) -> Result<Vec<usize>> {
        let values = self.values(x)?;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > tol {
            return Err(Error::NotInSet { psi_max: max });
        }
        Ok(values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() <= tol)
            .map(|(i, _)| i)
            .collect())
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveGamma(gamma))
    }
}

/// `(1/γ) ln Σ e^{γvᵢ}` in max-shifted form.
pub(crate) fn log_sum_exp(gamma: f64, values: &[f64]) -> f64 {
    let (arg, m) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let rest: f64 = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, v)| (gamma * (v - m)).exp())
        .sum();
    m + rest.ln_1p() / gamma
}

pub(crate) fn softmax(gamma: f64, values: &[f64]) -> Vec<f64> {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = values.iter().map(|v| (gamma * (v - m)).exp()).collect();
    let sum: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= sum;
    }
    w
}

/// `γ e^{γψ}` with the exponent clamped at [`EXP_CAP`]; the flag reports the clamp.
#[inline]
pub(crate) fn penalty_weight(gamma: f64, psi: f64) -> (f64, bool) {
    let exponent = gamma * psi;
    if exponent > EXP_CAP {
        (gamma * EXP_CAP.exp(), true)
    } else {
        (gamma * exponent.exp(), false)
    }
}
