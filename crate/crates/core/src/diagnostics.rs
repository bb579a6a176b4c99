//! Sampled runtime checks of the invariants the method relies on.
//!
//! Every check counts samples and violations and keeps the worst margin
//! (limit minus observed value, negative when violated). A check passes when
//! its violation rate is within [`ToleranceConfig::violation_rate`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlProblem, PenalizedField};
use crate::geometry::{SampleRegion, SweepingSet};
use crate::integrator::Trajectory;
use crate::linalg::{dot, norm};
use crate::schedule::{make_level, PenaltyLevel};
use crate::ToleranceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl InvariantSummary {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn merge(mut self, other: InvariantSummary) -> Self {
        self.checks.extend(other.checks);
        self.passed = self.checks.iter().all(|c| c.passed);
        self
    }
}

/// Accumulates one named check.
struct Tally {
    name: &'static str,
    samples: usize,
    violations: usize,
    worst_margin: f64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            samples: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
        }
    }

    /// Records `value ≤ limit`.
    fn record(&mut self, value: f64, limit: f64) {
        let margin = limit - value;
        self.samples += 1;
        if !(margin >= 0.0) {
            self.violations += 1;
        }
        if margin.is_nan() {
            self.worst_margin = f64::NEG_INFINITY;
        } else {
            self.worst_margin = self.worst_margin.min(margin);
        }
    }

    fn finish(self, allowed_rate: f64) -> CheckResult {
        let rate = if self.samples == 0 {
            0.0
        } else {
            self.violations as f64 / self.samples as f64
        };
        CheckResult {
            name: self.name.to_string(),
            samples: self.samples,
            violations: self.violations,
            worst_margin: self.worst_margin,
            passed: rate <= allowed_rate,
        }
    }
}

fn summarize(tallies: Vec<Tally>, allowed_rate: f64) -> InvariantSummary {
    let checks: Vec<CheckResult> = tallies.into_iter().map(|t| t.finish(allowed_rate)).collect();
    let passed = checks.iter().all(|c| c.passed);
    InvariantSummary { checks, passed }
}

/// Containment in `C^γ(k)`, the `ξ ≤ 2M/η` bound and the velocity bound
/// along a computed trajectory.
pub fn check_trajectory(
    problem: &ControlProblem,
    level: &PenaltyLevel,
    traj: &Trajectory,
    tol: &ToleranceConfig,
) -> InvariantSummary {
    let constants = problem.penalty_constants();
    let xi_limit = constants.gamma_threshold() * (1.0 + tol.xi_relative);
    let velocity_limit = problem.velocity_bound() * (1.0 + tol.velocity_relative);
    let containment_limit = -level.alpha + tol.containment;

    let mut containment = Tally::new("containment");
    let mut xi = Tally::new("xi_bound");
    let mut velocity = Tally::new("velocity_bound");
    for s in &traj.samples {
        containment.record(s.psi_smooth, containment_limit);
        xi.record(s.xi_total, xi_limit);
        velocity.record(s.field_norm, velocity_limit);
    }
    summarize(vec![containment, xi, velocity], tol.violation_rate)
}

fn sample_point(rng: &mut ChaCha8Rng, region: &SampleRegion) -> Vec<f64> {
    region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(l, h)| if h > l { rng.gen_range(*l..*h) } else { *l })
        .collect()
}

fn region_or_default(set: &SweepingSet) -> SampleRegion {
    set.sample_region().cloned().unwrap_or_else(|| SampleRegion {
        lo: vec![-1.0; set.dim()],
        hi: vec![1.0; set.dim()],
    })
}

/// Central-difference gradient with per-coordinate step `1e-7·max(1, |xᵢ|)`.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-7 * x[i].abs().max(1.0);
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖∞ / max(1, ‖b‖∞)`.
pub fn gradient_error(approx: &[f64], exact: &[f64]) -> f64 {
    let diff = approx.iter().zip(exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = exact.iter().map(|b| b.abs()).fold(1.0, f64::max);
    diff / scale
}

/// Sandwich, γ-monotonicity, softmax normalization, strictness and
/// finite-difference gradient checks at `sample_count` points drawn
/// uniformly from the set's sample region.
pub fn check_geometry(
    set: &SweepingSet,
    gammas: &[f64],
    sample_count: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> InvariantSummary {
    let region = region_or_default(set);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gammas: Vec<f64> = gammas.iter().copied().filter(|g| *g > 0.0).collect();
    gammas.sort_by(f64::total_cmp);
    let r = set.len() as f64;
    let abs = tol.smoothing_abs;

    let mut lower = Tally::new("sandwich_lower");
    let mut upper = Tally::new("sandwich_upper");
    let mut monotone = Tally::new("gamma_monotonicity");
    let mut softmax = Tally::new("softmax_normalization");
    let mut strict = Tally::new("strict_smoothing");
    let mut component_grad = Tally::new("component_gradient");
    let mut smooth_grad = Tally::new("smooth_gradient");

    for _ in 0..sample_count.max(1) {
        let x = sample_point(&mut rng, &region);
        let values = set.values(&x).expect("sample has the set dimension");
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let near_boundary = (-1.0..=1.0).contains(&max);

        if near_boundary {
            for (i, c) in set.components().iter().enumerate() {
                let fd = finite_difference_gradient(|y| c.value(y), &x);
                let g = set.component_gradient(i, &x).expect("valid index");
                component_grad.record(gradient_error(&fd, &g), tol.gradient_rel);
            }
        }

        let mut previous: Option<f64> = None;
        for &gamma in &gammas {
            let smooth = set.psi_smooth(gamma, &x).expect("gamma is positive");
            for v in &values {
                lower.record(*v, smooth + abs);
            }
            upper.record(smooth, max + r.ln() / gamma + abs);
            if let Some(prev) = previous {
                monotone.record(smooth, prev + abs);
            }
            previous = Some(smooth);

            let w = set.softmax_weights(gamma, &x).expect("gamma is positive");
            let sum: f64 = w.iter().sum();
            let negative = w.iter().copied().fold(0.0, f64::min);
            softmax.record((sum - 1.0).abs().max(-negative), 1e-12);

            if set.len() > 1 {
                // Strictness is only observable where the runner-up term
                // survives at the resolution of `max`.
                let rest: f64 = {
                    let mut sorted = values.clone();
                    sorted.sort_by(|a, b| b.total_cmp(a));
                    sorted[1..].iter().map(|v| (gamma * (v - max)).exp()).sum()
                };
                if rest / gamma > 1e-12 * max.abs().max(1.0) {
                    strict.record(max - smooth, -f64::MIN_POSITIVE);
                }
            }

            if near_boundary && gamma <= 1e3 {
                let fd = finite_difference_gradient(|y| set.psi_smooth(gamma, y).unwrap(), &x);
                let g = set.psi_smooth_grad(gamma, &x).expect("gamma is positive");
                smooth_grad.record(gradient_error(&fd, &g), tol.gradient_rel);
            }
        }
    }
    let mut tallies = vec![lower, upper, monotone, softmax, component_grad, smooth_grad];
    if set.len() > 1 {
        tallies.push(strict);
    }
    // Geometry identities must hold at every sample.
    summarize(tallies, 0.0)
}

/// Agreement of the per-component and smoothed forms of the penalized
/// field at sampled `(x, u)` for every `γ` above `2M/η`. Samples where the
/// exponent clamp engages are skipped.
pub fn check_field_forms(
    problem: &ControlProblem,
    gammas: &[f64],
    sample_count: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> InvariantSummary {
    let region = region_or_default(problem.set());
    let bounds = problem.control_box();
    let constants = problem.penalty_constants();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = Tally::new("field_form_agreement");
    let levels: Vec<PenaltyLevel> = gammas.iter().filter_map(|&g| make_level(&constants, g, 0).ok()).collect();
    let control_region = SampleRegion {
        lo: bounds.lo().to_vec(),
        hi: bounds.hi().to_vec(),
    };
    let mut accepted = 0;
    for _ in 0..sample_count.max(1) * 50 {
        if accepted >= sample_count.max(1) {
            break;
        }
        let x = sample_point(&mut rng, &region);
        let u = sample_point(&mut rng, &control_region);
        // The clamp rescales components unequally, so the forms only
        // coincide where it is inactive.
        let clamped = levels.iter().any(|l| {
            problem.set().penalty_weights(l.gamma, &x).expect("sample has the set dimension").clamped > 0
        });
        if clamped {
            continue;
        }
        accepted += 1;
        for level in &levels {
            let field = PenalizedField::new(problem, *level);
            let multi = field.field_multi(&x, &u).expect("sample matches the problem");
            let smooth = field.field_smooth(&x, &u).expect("sample matches the problem");
            agree.record(gradient_error(&smooth, &multi), tol.field_rel);
        }
    }
    summarize(vec![agree], 0.0)
}

/// Minimum norm over the convex hull of `points` (Frank-Wolfe with exact
/// line search; closed form for one or two points).
fn min_norm_in_hull(points: &[Vec<f64>]) -> f64 {
    match points {
        [] => f64::INFINITY,
        [p] => norm(p),
        [a, b] => {
            let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
            let dd = dot(&d, &d);
            let t = if dd > 0.0 { (-dot(a, &d) / dd).clamp(0.0, 1.0) } else { 0.0 };
            let p: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + t * y).collect();
            norm(&p)
        }
        _ => {
            let mut x = points[0].clone();
            for _ in 0..2000 {
                let s = points
                    .iter()
                    .min_by(|p, q| dot(p, &x).total_cmp(&dot(q, &x)))
                    .expect("nonempty");
                let d: Vec<f64> = s.iter().zip(&x).map(|(a, b)| a - b).collect();
                let dd = dot(&d, &d);
                if dd == 0.0 {
                    break;
                }
                let t = (-dot(&x, &d) / dd).clamp(0.0, 1.0);
                if t == 0.0 {
                    break;
                }
                for (xi, di) in x.iter_mut().zip(&d) {
                    *xi += t * di;
                }
            }
            norm(&x)
        }
    }
}

/// Spot checks of the user-supplied constants: `‖f(x, u)‖ ≤ M` on sampled
/// `C × U`, and the `2η` lower bound on convex combinations of active
/// gradients at boundary points found by bisection along random rays.
/// Violations are reported, never fatal.
pub fn check_problem(problem: &ControlProblem, sample_count: usize, seed: u64, tol: &ToleranceConfig) -> InvariantSummary {
    let set = problem.set();
    let region = region_or_default(set);
    let bounds = problem.control_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut free_bound = Tally::new("free_dynamics_bound");
    let mut qualification = Tally::new("active_gradient_bound");
    let eta = set.constants().eta;
    let m_limit = problem.bound_m() * (1.0 + tol.bound_slack);

    let mut inside = Vec::new();
    let mut deepest = (problem.x0().to_vec(), set.psi_max(problem.x0()).unwrap_or(0.0));
    for _ in 0..sample_count.max(1) * 20 {
        if inside.len() >= sample_count.max(1) {
            break;
        }
        let x = sample_point(&mut rng, &region);
        let psi = set.psi_max(&x).expect("sample has the set dimension");
        if psi <= 0.0 {
            if psi < deepest.1 {
                deepest = (x.clone(), psi);
            }
            inside.push(x);
        }
    }
    for x in &inside {
        let u: Vec<f64> = bounds
            .lo()
            .iter()
            .zip(bounds.hi())
            .map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l })
            .collect();
        let f = problem.free_dynamics(x, &u).expect("sampled control is in the box");
        free_bound.record(norm(&f), m_limit);
    }

    let mut boundary_points = Vec::new();
    if set.psi_max(problem.x0()).map_or(false, |p| p >= -tol.interior_band) {
        boundary_points.push(problem.x0().to_vec());
    }
    let center = deepest.0;
    if deepest.1 < 0.0 {
        for _ in 0..sample_count.max(1) {
            let dir: Vec<f64> = (0..set.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = norm(&dir);
            if len < 1e-3 {
                continue;
            }
            let at = |t: f64| -> Vec<f64> { center.iter().zip(&dir).map(|(c, d)| c + t * d / len).collect() };
            let mut hi = 1.0;
            while set.psi_max(&at(hi)).unwrap() <= 0.0 && hi < 1e6 {
                hi *= 2.0;
            }
            if hi >= 1e6 {
                continue;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if set.psi_max(&at(mid)).unwrap() <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            boundary_points.push(at(lo));
        }
    }
    for b in &boundary_points {
        let values = set.values(b).expect("dimension");
        let active: Vec<Vec<f64>> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() <= 1e-9_f64.max(tol.active_set))
            .map(|(i, _)| set.component_gradient(i, b).expect("valid index"))
            .collect();
        if !active.is_empty() {
            qualification.record(-min_norm_in_hull(&active), -2.0 * eta);
        }
    }
    summarize(vec![free_bound, qualification], tol.violation_rate)
}
