//! Penalty levels and the arithmetic γ ladder of the continuation loop.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative margin a raised starting γ must keep above `2M/η`.
pub const RAISE_MARGIN: f64 = 1.001;

/// Problem constants that determine `α` and `σ` for a given `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConstants {
    /// Bound (and Lipschitz constant) of the free dynamics.
    pub bound_m: f64,
    pub eta: f64,
    pub m_psi: f64,
    /// Number of constraint functions.
    pub r: usize,
}

impl PenaltyConstants {
    /// `2M/η`; every level needs `γ` strictly above it.
    pub fn gamma_threshold(&self) -> f64 {
        2.0 * self.bound_m / self.eta
    }
}

/// One continuation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyLevel {
    pub k: usize,
    pub gamma: f64,
    /// `ln(ηγ/2M)/γ`, the depth of the inner set `C^γ(k)`.
    pub alpha: f64,
    /// `(r M_ψ / 2η²)(ln r/γ + α)`, the shift of boundary starts.
    pub sigma: f64,
}

pub fn make_level(constants: &PenaltyConstants, gamma: f64, k: usize) -> Result<PenaltyLevel> {
    let threshold = constants.gamma_threshold();
    if !(gamma > threshold) || !gamma.is_finite() {
        return Err(Error::GammaTooSmall { gamma, threshold });
    }
    let PenaltyConstants { eta, m_psi, r, .. } = *constants;
    let alpha = (gamma / threshold).ln() / gamma;
    let r_f = r as f64;
    let sigma = r_f * m_psi / (2.0 * eta * eta) * (r_f.ln() / gamma + alpha);
    Ok(PenaltyLevel {
        k,
        gamma,
        alpha,
        sigma,
    })
}

/// Record of a sub-threshold start that was moved up the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRaise {
    pub requested: f64,
    pub raised_to: f64,
    pub threshold: f64,
}

/// Arithmetic progression `γ₀, γ₀+δ, γ₀+2δ, …` of penalty levels.
#[derive(Debug, Clone)]
pub struct Ladder {
    constants: PenaltyConstants,
    start: f64,
    delta: f64,
    max_levels: usize,
    next: usize,
    raise: Option<GammaRaise>,
}

impl Ladder {
    /// Builds the ladder. In strict mode a start at or below `2M/η` is an
    /// error; otherwise the start moves up the ladder's own grid
    /// `γ₀ + jδ` to the first point above `2M/η · RAISE_MARGIN` and the
    /// raise is recorded.
    pub fn new(
        constants: PenaltyConstants,
        start_gamma: f64,
        delta: f64,
        max_levels: usize,
        strict: bool,
    ) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        if !(start_gamma > 0.0) {
            return Err(Error::NonPositiveGamma(start_gamma));
        }
        let threshold = constants.gamma_threshold();
        let mut start = start_gamma;
        let mut raise = None;
        if start <= threshold {
            if strict {
                return Err(Error::GammaTooSmall {
                    gamma: start,
                    threshold,
                });
            }
            let floor = threshold * RAISE_MARGIN;
            let steps = ((floor - start) / delta).ceil().max(0.0);
            start += steps * delta;
            if start <= floor {
                start += delta;
            }
            log::warn!(
                "starting gamma {start_gamma} is not above 2M/eta = {threshold}; raised to {start}"
            );
            raise = Some(GammaRaise {
                requested: start_gamma,
                raised_to: start,
                threshold,
            });
        }
        Ok(Self {
            constants,
            start,
            delta,
            max_levels,
            next: 0,
            raise,
        })
    }

    pub fn raise(&self) -> Option<GammaRaise> {
        self.raise
    }

    pub fn start_gamma(&self) -> f64 {
        self.start
    }

    /// `γ_k = γ₀ + kδ` for the (possibly raised) start.
    pub fn gamma_at(&self, k: usize) -> f64 {
        self.start + k as f64 * self.delta
    }
}

impl Iterator for Ladder {
    type Item = Result<PenaltyLevel>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.max_levels {
            return None;
        }
        let k = self.next;
        self.next += 1;
        Some(make_level(&self.constants, self.gamma_at(k), k))
    }
}

/// Squared L∞ distance bound between the penalized and exact trajectories,
/// `e^{M̃T}σ² + 8ηM(e^{M̃T}−1)σ/(M̃M_ψ)` with `M̃ = 5MM_ψ/η + 2M`.
/// `None` when the expression overflows.
pub fn distance_sq_bound(constants: &PenaltyConstants, level: &PenaltyLevel, horizon: f64) -> Option<f64> {
    let PenaltyConstants {
        bound_m: m,
        eta,
        m_psi,
        ..
    } = *constants;
    let m_tilde = 5.0 * m * m_psi / eta + 2.0 * m;
    let growth = (m_tilde * horizon).exp();
    let sigma = level.sigma;
    let value = growth * sigma * sigma + 8.0 * eta * m * (growth - 1.0) * sigma / (m_tilde * m_psi);
    value.is_finite().then_some(value)
}
