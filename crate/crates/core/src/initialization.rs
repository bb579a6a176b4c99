//! Shifted initial points for boundary starts.
//!
//! At a boundary point `c` the tangent cone of `C` is the polyhedral cone
//! `T = {w : ⟨∇ψᵢ(c), w⟩ ≤ 0, i active}`. The inward direction is
//! `d_c = Σⱼ P_T(−∇ψⱼ(c))` over the active indices, and each level starts
//! from `x0 + σ d_c/‖d_c‖`.

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlProblem;
use crate::geometry::SweepingSet;
use crate::linalg::{self, dot, norm};
use crate::schedule::PenaltyLevel;
use crate::{Error, Result, ToleranceConfig};

/// Euclidean projection of `v` onto `K = {w : ⟨gᵢ, w⟩ ≤ 0 ∀i}`.
///
/// Enumerates every subset `S` of constraints taken as equalities, projects
/// `v` onto `{w : ⟨gᵢ, w⟩ = 0, i ∈ S}` and keeps the candidates that are
/// feasible with nonnegative multipliers. Exact for polyhedral cones;
/// exponential in the number of gradients.
pub fn project_tangent_cone(active_gradients: &[Vec<f64>], v: &[f64], kkt_tol: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if active_gradients.is_empty() {
        return Err(Error::InvalidArgument("no active gradients".into()));
    }
    if active_gradients.len() > 20 {
        return Err(Error::InvalidArgument(format!(
            "{} active gradients is too many for subset enumeration",
            active_gradients.len()
        )));
    }
    for g in active_gradients {
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: g.len(),
            });
        }
        if norm(g) == 0.0 {
            return Err(Error::DegenerateGradients);
        }
    }
    let scale = active_gradients
        .iter()
        .map(|g| norm(g))
        .fold(norm(v), f64::max)
        .max(1.0);
    let tol = kkt_tol * scale;

    let r = active_gradients.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << r) {
        let subset: Vec<&Vec<f64>> = (0..r)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &active_gradients[i])
            .collect();
        let Some((w, multipliers)) = project_onto_subspace(&subset, v) else {
            continue;
        };
        if multipliers.iter().any(|&l| l < -tol) {
            continue;
        }
        if active_gradients.iter().any(|g| dot(g, &w) > tol) {
            continue;
        }
        let d = linalg::distance(&w, v);
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, w));
        }
    }
    best.map(|(_, w)| w).ok_or(Error::DegenerateGradients)
}

/// Projects `v` onto the orthogonal complement of `span(subset)`; returns the
/// projection and the multipliers `λ` with `v − w = Σ λᵢ gᵢ`.
fn project_onto_subspace(subset: &[&Vec<f64>], v: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let s = subset.len();
    if s == 0 {
        return Some((v.to_vec(), Vec::new()));
    }
    if s > v.len() {
        return None;
    }
    let mut gram = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            gram[i * s + j] = dot(subset[i], subset[j]);
        }
    }
    let rhs: Vec<f64> = subset.iter().map(|g| dot(g, v)).collect();
    let lambda = linalg::solve(gram, rhs, 1e-12)?;
    let mut w = v.to_vec();
    for (l, g) in lambda.iter().zip(subset) {
        for (wi, gi) in w.iter_mut().zip(g.iter()) {
            *wi -= l * gi;
        }
    }
    Some((w, lambda))
}

/// Inward shift direction at a boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InwardDirection {
    /// `d_c / ‖d_c‖`.
    pub direction: Vec<f64>,
    /// `d_c`.
    pub raw: Vec<f64>,
    pub active_set: Vec<usize>,
    /// `P_T(−∇ψⱼ(c))` for each active `j`, in `active_set` order.
    pub projections: Vec<Vec<f64>>,
}

pub fn inward_direction(set: &SweepingSet, c: &[f64], tol: &ToleranceConfig) -> Result<InwardDirection> {
    let active_set = set.active_indices(c, tol.active_set)?;
    if active_set.is_empty() {
        return Err(Error::InvalidArgument(
            "inward direction requested at a point with no active constraint".into(),
        ));
    }
    let gradients = active_set
        .iter()
        .map(|&i| set.component_gradient(i, c))
        .collect::<Result<Vec<_>>>()?;
    let mut raw = vec![0.0; c.len()];
    let mut projections = Vec::with_capacity(gradients.len());
    for g in &gradients {
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let p = project_tangent_cone(&gradients, &neg, tol.projection_kkt)?;
        for (d, pi) in raw.iter_mut().zip(&p) {
            *d += pi;
        }
        projections.push(p);
    }
    let len = norm(&raw);
    if !(len > tol.inward_min_norm) {
        return Err(Error::ZeroInwardDirection { norm: len });
    }
    Ok(InwardDirection {
        direction: raw.iter().map(|d| d / len).collect(),
        raw,
        active_set,
        projections,
    })
}

/// Start point of one penalty level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedStart {
    pub point: Vec<f64>,
    /// `None` for interior starts.
    pub direction: Option<InwardDirection>,
    /// The shifted point is not in `C^γ(k)`: `γ` is still too small for the
    /// shift to clear the smoothing band.
    pub shift_not_absorbed: bool,
}

pub fn shifted_start(problem: &ControlProblem, level: &PenaltyLevel, tol: &ToleranceConfig) -> Result<ShiftedStart> {
    let set = problem.set();
    let x0 = problem.x0();
    let psi_max = set.psi_max(x0)?;
    if psi_max > tol.active_set {
        return Err(Error::InitialPointOutsideC { psi_max });
    }
    let (point, direction) = if psi_max < -tol.interior_band {
        (x0.to_vec(), None)
    } else {
        let dir = inward_direction(set, x0, tol)?;
        let point = x0
            .iter()
            .zip(&dir.direction)
            .map(|(x, d)| x + level.sigma * d)
            .collect();
        (point, Some(dir))
    };
    let shift_not_absorbed = set.psi_smooth(level.gamma, &point)? > -level.alpha;
    if shift_not_absorbed {
        log::warn!(
            "shifted start at gamma = {} is outside C^gamma(k); continuing",
            level.gamma
        );
    }
    Ok(ShiftedStart {
        point,
        direction,
        shift_not_absorbed,
    })
}
