use sweep_core::catalog;
use sweep_core::continuation::{compare_exact, run, ContinuationOptions, StopReason};
use sweep_core::diagnostics::check_trajectory;
use sweep_core::dynamics::PenalizedField;
use sweep_core::geometry::Membership;
use sweep_core::initialization::shifted_start;
use sweep_core::integrator::{integrate, terminal_state, IntegratorOptions, PiecewiseControl, Sample, Trajectory};
use sweep_core::optimizer::{objective, solve_level, LevelOptions};
use sweep_core::schedule::make_level;
use sweep_core::ToleranceConfig;

fn quick_options() -> ContinuationOptions {
    let mut o = ContinuationOptions::default();
    o.level.integrator.step = 1e-3;
    o.level.nelder_mead.max_evals = Some(400);
    o
}

#[test]
fn example_trajectory_stays_in_inner_set() {
    let entry = catalog::lookup("two-spheres").unwrap();
    let problem = &entry.problem;
    let level = make_level(&problem.penalty_constants(), 60.0, 0).unwrap();
    let start = shifted_start(problem, &level, &ToleranceConfig::default()).unwrap();
    let control = PiecewiseControl::constant(problem.horizon(), 20, &[1.0, -1.0]).unwrap();
    let field = PenalizedField::new(problem, level);
    let traj = integrate(&field, &control, &start.point, &IntegratorOptions::default()).unwrap();
    for s in &traj.samples {
        let m = problem.set().membership(level.gamma, level.alpha, &s.state).unwrap();
        assert_eq!(m, Membership::InCk, "t = {}", s.t);
    }
    let end = traj.terminal_state();
    let dist = ((end[0]).powi(2) + (end[1] - 3.0).powi(2) + end[2].powi(2)).sqrt();
    assert!(dist <= 0.15, "terminal state {end:?}");
    assert!(check_trajectory(problem, &level, &traj, &ToleranceConfig::default()).passed);

    let cost = objective(&field, &control, &start.point, &IntegratorOptions::default());
    assert!((-9.0..=-8.85).contains(&cost), "cost {cost}");
    assert_eq!(cost, problem.terminal_cost(end));
}

#[test]
fn refining_the_control_grid_changes_nothing() {
    let entry = catalog::lookup("two-spheres").unwrap();
    let problem = &entry.problem;
    let level = make_level(&problem.penalty_constants(), 60.0, 0).unwrap();
    let start = shifted_start(problem, &level, &ToleranceConfig::default()).unwrap();
    let field = PenalizedField::new(problem, level);
    let values: Vec<Vec<f64>> = (0..20).map(|j| vec![(j as f64 * 0.3).sin(), -1.0 + j as f64 * 0.05]).collect();
    let coarse = PiecewiseControl::new(problem.horizon(), &values).unwrap();
    let fine = coarse.refine(2);
    let opts = IntegratorOptions::default();
    let a = terminal_state(&field, &coarse, &start.point, &opts).unwrap().state;
    let b = terminal_state(&field, &fine, &start.point, &opts).unwrap().state;
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() <= 1e-6, "{a:?} vs {b:?}");
    }
}

#[test]
fn rk4_is_fourth_order_on_the_smooth_problem() {
    let entry = catalog::lookup("unit-ball-1").unwrap();
    let problem = &entry.problem;
    let level = make_level(&problem.penalty_constants(), 40.0, 0).unwrap();
    let start = shifted_start(problem, &level, &ToleranceConfig::default()).unwrap();
    let field = PenalizedField::new(problem, level);
    let control = PiecewiseControl::constant(problem.horizon(), 20, &entry.nominal_control).unwrap();
    let h = control.interval_len();
    let end = |step: f64| {
        terminal_state(&field, &control, &start.point, &IntegratorOptions { step, ..Default::default() })
            .unwrap()
            .state
    };
    let error = |step: f64| {
        let reference = end(step / 16.0);
        end(step).iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let errors: Vec<f64> = (4..7).map(|k| error(h / (1 << k) as f64)).collect();
    for pair in errors.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!(order >= 3.7, "errors {errors:?}");
    }
}

#[test]
fn level_solve_improves_on_its_start() {
    let entry = catalog::lookup("unit-ball-1").unwrap();
    let problem = &entry.problem;
    let level = make_level(&problem.penalty_constants(), 20.0, 0).unwrap();
    let opts = quick_options().level;
    let cold = solve_level(problem, level, 10, None, &opts).unwrap();
    let start_cost = {
        let field = PenalizedField::new(problem, level);
        let mid = PiecewiseControl::constant(problem.horizon(), 10, &problem.control_box().midpoint()).unwrap();
        objective(&field, &mid, &cold.start.point, &opts.integrator)
    };
    assert!(cold.best_cost < start_cost);
    assert!(cold.best_cost < -0.9, "cost {}", cold.best_cost);
    cold.best_control.check(problem.control_box()).unwrap();

    let warm = solve_level(problem, level, 10, Some(&cold.best_control), &opts).unwrap();
    assert!(warm.best_cost <= cold.best_cost + 1e-12);
    assert!(solve_level(problem, level, 5, Some(&cold.best_control), &opts).is_err());
    assert!(solve_level(problem, level, 0, None, &LevelOptions::default()).is_err());
}

#[test]
fn loose_tolerance_stops_after_two_levels() {
    let entry = catalog::lookup("unit-ball-1").unwrap();
    let mut opts = quick_options();
    opts.eps = 100.0;
    let report = run(&entry.problem, &opts).unwrap();
    assert_eq!(report.levels.len(), 2);
    assert_eq!(report.stop_reason, StopReason::CostConverged);
    assert_eq!(report.final_gamma(), Some(30.0));
    assert!(report.gamma_raise.is_none());
}

#[test]
fn unit_ball_continuation_converges_cleanly() {
    let entry = catalog::lookup("unit-ball-1").unwrap();
    let report = run(&entry.problem, &quick_options()).unwrap();
    assert_eq!(report.stop_reason, StopReason::CostConverged);
    assert!(report.levels.iter().all(|l| l.invariants.passed), "{:#?}", report.levels);
    let cost = report.final_cost.unwrap();
    assert!((cost - entry.exact_cost.unwrap()).abs() < 0.05, "cost {cost}");
    let trace = report.cost_trace();
    let n = trace.len();
    assert!((trace[n - 1] - trace[n - 2]).abs() <= 0.01);
}

#[test]
fn level_budget_is_respected() {
    let entry = catalog::lookup("unit-ball-1").unwrap();
    let mut opts = quick_options();
    opts.eps = 1e-12;
    opts.max_levels = 3;
    let report = run(&entry.problem, &opts).unwrap();
    assert_eq!(report.levels.len(), 3);
    assert_eq!(report.stop_reason, StopReason::MaxLevels);
}

#[test]
fn strict_mode_rejects_low_gamma() {
    let entry = catalog::lookup("two-spheres").unwrap();
    let mut opts = quick_options();
    opts.strict = true;
    assert!(run(&entry.problem, &opts).is_err());
}

#[test]
fn exact_comparison_of_the_exact_solution_is_zero() {
    let entry = catalog::lookup("two-spheres").unwrap();
    let problem = &entry.problem;
    let samples = (0..=100)
        .map(|k| {
            let t = problem.horizon() * k as f64 / 100.0;
            Sample {
                t,
                state: catalog::two_spheres_exact(t),
                psi_smooth: 0.0,
                xi_total: 0.0,
                field_norm: 0.0,
            }
        })
        .collect();
    let traj = Trajectory {
        samples,
        clamp_count: 0,
        retries: 0,
    };
    let (sup, gap) = compare_exact(problem, &traj, catalog::two_spheres_exact);
    assert_eq!(sup, 0.0);
    assert_eq!(gap, 0.0);
}

#[test]
fn trajectory_check_flags_violations() {
    let entry = catalog::lookup("two-spheres").unwrap();
    let problem = &entry.problem;
    let level = make_level(&problem.penalty_constants(), 60.0, 0).unwrap();
    let start = shifted_start(problem, &level, &ToleranceConfig::default()).unwrap();
    let field = PenalizedField::new(problem, level);
    let control = PiecewiseControl::constant(problem.horizon(), 20, &[1.0, -1.0]).unwrap();
    let mut traj = integrate(&field, &control, &start.point, &IntegratorOptions::default()).unwrap();
    let k = traj.samples.len() / 2;
    traj.samples[k].psi_smooth = 0.5;
    traj.samples[k].xi_total = 1e3;
    let s = check_trajectory(problem, &level, &traj, &ToleranceConfig::default());
    assert!(!s.passed);
    assert_eq!(s.check("containment").unwrap().violations, 1);
    assert_eq!(s.check("xi_bound").unwrap().violations, 1);
    assert!(s.check("velocity_bound").unwrap().passed);
}
