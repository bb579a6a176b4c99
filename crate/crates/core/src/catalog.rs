//! Built-in problems, selected by key.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::dynamics::{ControlBox, ControlProblem};
use crate::geometry::{Ball, HalfSpace, SampleRegion, SetConstants, SmoothFunction, SweepingSet};
use crate::{Error, Result};

/// Closed-form optimal trajectory, `t ↦ x̄(t)`.
pub type ExactSolution = fn(f64) -> Vec<f64>;

pub const KEYS: &[&str] = &["two-spheres", "unit-ball-1", "box-3", "corrupted-gradient"];

/// Tolerance on `max ψ(x0)` when a catalog problem is built.
const X0_TOL: f64 = 1e-7;

pub struct CatalogEntry {
    pub key: &'static str,
    pub description: &'static str,
    pub problem: ControlProblem,
    pub exact: Option<ExactSolution>,
    /// Optimal exact cost, when known.
    pub exact_cost: Option<f64>,
    /// Control used for single-level trajectory checks.
    pub nominal_control: Vec<f64>,
    /// `false` when the problem violates the standing hypotheses; such
    /// problems are for geometry tests only and are not solved.
    pub conforming: bool,
}

pub fn lookup(key: &str) -> Result<CatalogEntry> {
    match key {
        "two-spheres" => two_spheres(false),
        "corrupted-gradient" => two_spheres(true),
        "unit-ball-1" => unit_ball(),
        "box-3" => box3(),
        _ => Err(Error::UnknownProblem {
            key: key.to_string(),
            available: KEYS.join(", "),
        }),
    }
}

/// `x̄(t) = (0, 3 sin t, 3 cos t)`.
pub fn two_spheres_exact(t: f64) -> Vec<f64> {
    vec![0.0, 3.0 * t.sin(), 3.0 * t.cos()]
}

/// Reports `factor · ∇ψ` as the gradient of `ψ`.
struct MisreportedGradient {
    inner: Ball,
    factor: f64,
}

impl SmoothFunction for MisreportedGradient {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out);
        for o in out {
            *o *= self.factor;
        }
    }
}

/// Intersection of the balls of radius 5 around `(±4, 0, 0)`, with
/// `f = (x₁−2+u−v, 4x₂+x₃+u+v, −x₂+4x₃+u+v)`, `g = x₁² − x₂² + |x₃|`,
/// `U = [−1, 1]²`, `T = π/2`, `x0 = (0, 0, 3)`.
fn two_spheres(corrupt: bool) -> Result<CatalogEntry> {
    let right = Ball::new(vec![4.0, 0.0, 0.0], 5.0);
    let left: Arc<dyn SmoothFunction> = Arc::new(Ball::new(vec![-4.0, 0.0, 0.0], 5.0));
    let right: Arc<dyn SmoothFunction> = if corrupt {
        Arc::new(MisreportedGradient {
            inner: right,
            factor: 1.1,
        })
    } else {
        Arc::new(right)
    };
    let set = SweepingSet::new(
        vec![right, left],
        SetConstants {
            eta: 2.0,
            m_psi: 1.0,
            m_bar_psi: 10.0,
        },
    )?
    .with_sample_region(SampleRegion {
        lo: vec![-1.5, -3.5, -3.5],
        hi: vec![1.5, 3.5, 3.5],
    })?;
    let f = Arc::new(|x: &[f64], u: &[f64], out: &mut [f64]| {
        let s = u[0] + u[1];
        out[0] = x[0] - 2.0 + u[0] - u[1];
        out[1] = 4.0 * x[1] + x[2] + s;
        out[2] = -x[1] + 4.0 * x[2] + s;
    });
    let g = Arc::new(|x: &[f64]| x[0] * x[0] - x[1] * x[1] + x[2].abs());
    let problem = ControlProblem::new(
        if corrupt { "corrupted-gradient" } else { "two-spheres" },
        f,
        g,
        ControlBox::new(vec![-1.0, -1.0], vec![1.0, 1.0])?,
        FRAC_PI_2,
        vec![0.0, 0.0, 3.0],
        set,
        35.0,
        X0_TOL,
    )?;
    Ok(CatalogEntry {
        key: if corrupt { "corrupted-gradient" } else { "two-spheres" },
        description: if corrupt {
            "two-spheres with a deliberately wrong gradient for psi_1 (negative control for checks)"
        } else {
            "intersection of two balls in R^3 with a known optimal trajectory (0, 3 sin t, 3 cos t) and cost -9"
        },
        problem,
        exact: Some(two_spheres_exact),
        exact_cost: Some(-9.0),
        nominal_control: vec![1.0, -1.0],
        conforming: !corrupt,
    })
}

/// Unit disc in R², `x' = u`, `g = −x₁`, `U = [−1, 1]²`, `T = 2`,
/// `x0 = (0, −1)` on the boundary. The optimum slides to `(1, 0)`, cost −1.
fn unit_ball() -> Result<CatalogEntry> {
    let set = SweepingSet::new(
        vec![Arc::new(Ball::new(vec![0.0, 0.0], 1.0))],
        SetConstants {
            eta: 0.9,
            m_psi: 1.0,
            m_bar_psi: 2.0,
        },
    )?
    .with_sample_region(SampleRegion {
        lo: vec![-1.5, -1.5],
        hi: vec![1.5, 1.5],
    })?;
    let f = Arc::new(|_x: &[f64], u: &[f64], out: &mut [f64]| out.copy_from_slice(u));
    let g = Arc::new(|x: &[f64]| -x[0]);
    let problem = ControlProblem::new(
        "unit-ball-1",
        f,
        g,
        ControlBox::new(vec![-1.0, -1.0], vec![1.0, 1.0])?,
        2.0,
        vec![0.0, -1.0],
        set,
        1.5,
        X0_TOL,
    )?;
    Ok(CatalogEntry {
        key: "unit-ball-1",
        description: "single smooth constraint (unit disc in R^2); the method reduces to the smooth case",
        problem,
        exact: None,
        exact_cost: Some(-1.0),
        nominal_control: vec![1.0, 0.0],
        conforming: true,
    })
}

/// The cube `[−1, 1]³` as six halfspaces, `x' = u`, start at the corner
/// `(1, 1, 1)`. Each `{ψᵢ ≤ 0}` is unbounded, so the problem is flagged
/// non-conforming.
fn box3() -> Result<CatalogEntry> {
    let mut comps: Vec<Arc<dyn SmoothFunction>> = Vec::with_capacity(6);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut normal = vec![0.0; 3];
            normal[axis] = sign;
            comps.push(Arc::new(HalfSpace::new(normal, 1.0)));
        }
    }
    let set = SweepingSet::new(
        comps,
        SetConstants {
            eta: 0.25,
            m_psi: 0.5,
            m_bar_psi: 1.0,
        },
    )?
    .with_sample_region(SampleRegion {
        lo: vec![-1.5; 3],
        hi: vec![1.5; 3],
    })?;
    let f = Arc::new(|_x: &[f64], u: &[f64], out: &mut [f64]| out.copy_from_slice(u));
    let g = Arc::new(|x: &[f64]| x.iter().sum());
    let problem = ControlProblem::new(
        "box-3",
        f,
        g,
        ControlBox::new(vec![-1.0; 3], vec![1.0; 3])?,
        1.0,
        vec![1.0, 1.0, 1.0],
        set,
        1.8,
        X0_TOL,
    )?;
    Ok(CatalogEntry {
        key: "box-3",
        description: "cube [-1,1]^3 as six halfspaces (r = 6); non-conforming, geometry tests only",
        problem,
        exact: None,
        exact_cost: None,
        nominal_control: vec![-0.5, 0.0, 0.5],
        conforming: false,
    })
}
