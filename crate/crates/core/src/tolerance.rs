use serde::{Deserialize, Serialize};

/// Every numerical tolerance used by the solver and its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Absolute band on `ψᵢ` for a constraint to count as active.
    pub active_set: f64,
    /// `max ψ(x0) < -interior_band` classifies the start as interior.
    pub interior_band: f64,
    /// Slack added to `-α` in the trajectory containment check.
    pub containment: f64,
    /// Relative slack on the `2M/η` bound for `ξ`.
    pub xi_relative: f64,
    /// Relative slack on the velocity bound `M + 2M M̄ψ/η`.
    pub velocity_relative: f64,
    /// Residual allowed in the tangent-cone KKT conditions.
    pub projection_kkt: f64,
    /// Inward directions with a smaller norm are rejected.
    pub inward_min_norm: f64,
    /// Relative slack when spot-checking `‖f(x, u)‖ ≤ M`.
    pub bound_slack: f64,
    /// Absolute slack for the sandwich and monotonicity checks on `ψ_γ`.
    pub smoothing_abs: f64,
    /// Relative error allowed between analytic and finite-difference gradients.
    pub gradient_rel: f64,
    /// Relative disagreement allowed between the two forms of the penalized field.
    pub field_rel: f64,
    /// Allowed fraction of trajectory samples violating a check.
    pub violation_rate: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            active_set: 1e-7,
            interior_band: 1e-7,
            containment: 1e-3,
            xi_relative: 0.05,
            velocity_relative: 0.05,
            projection_kkt: 1e-9,
            inward_min_norm: 1e-10,
            bound_slack: 0.05,
            smoothing_abs: 1e-12,
            gradient_rel: 1e-5,
            field_rel: 1e-10,
            violation_rate: 0.0,
        }
    }
}
