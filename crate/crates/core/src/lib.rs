//! Numerical solver for fixed-horizon Mayer optimal control problems whose
//! dynamics are a controlled Moreau sweeping process
//!
//! ```text
//! x'(t) ∈ f(x(t), u(t)) − N_C(x(t)),   x(0) = x0,   C = ∩ᵢ { ψᵢ ≤ 0 }.
//! ```
//!
//! The normal cone is replaced by the exponential penalty
//! `Σᵢ γ e^{γψᵢ(x)} ∇ψᵢ(x)`, which equals `γ e^{γψ_γ(x)} ∇ψ_γ(x)` for the
//! log-sum-exp smoothing `ψ_γ` of `maxᵢ ψᵢ`. Each penalized problem is
//! discretized with piecewise-constant controls, integrated with fixed-step
//! RK4 and minimized with a box-clamped Nelder-Mead search. The penalty
//! parameter γ is raised along an arithmetic ladder until two consecutive
//! optimal costs agree to a tolerance.
//!
//! Module map:
//!
//! * [`geometry`]: the sweeping set, smoothed max and penalty weights.
//! * [`schedule`]: penalty levels `(γ, α, σ)` and the continuation ladder.
//! * [`initialization`]: tangent-cone projections and shifted start points.
//! * [`dynamics`]: control problems and the penalized vector field.
//! * [`integrator`]: RK4 under piecewise-constant controls.
//! * [`optimizer`]: Nelder-Mead over stacked control vectors.
//! * [`continuation`]: the outer γ loop and comparison against exact solutions.
//! * [`diagnostics`]: sampled runtime checks of the theoretical invariants.
//! * [`catalog`]: built-in problems, including the two-ball benchmark.

pub mod catalog;
pub mod continuation;
pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod geometry;
pub mod initialization;
pub mod integrator;
mod linalg;
pub mod optimizer;
pub mod schedule;
mod tolerance;

pub use error::{Error, Result};
pub use tolerance::ToleranceConfig;

/// Library version recorded in solve reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
