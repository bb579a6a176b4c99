//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Drives the `sweepctl` binary on the catalog problems; the two full example solves
//! make this take several minutes.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sweep_core::catalog;
use sweep_core::dynamics::PenalizedField;
use sweep_core::initialization::{inward_direction, project_tangent_cone, shifted_start};
use sweep_core::integrator::{terminal_state, IntegratorOptions, PiecewiseControl};
use sweep_core::schedule::make_level;
use sweep_core::ToleranceConfig;

const EXAMPLE_ARGS: &[&str] = &[
    "--problem",
    "two-spheres",
    "--N",
    "20",
    "--gamma0",
    "20",
    "--delta",
    "10",
    "--rk4-step",
    "1e-4",
];

struct Outcome {
    label: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(label: &'static str, passed: bool, detail: String) -> Outcome {
    println!("criterion {label}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
    Outcome { label, passed, detail }
}

struct Run {
    code: i32,
    stdout: String,
    report: Value,
    report_text: String,
    csv: Vec<Vec<f64>>,
    header: Vec<String>,
}

fn work_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name)
}

fn sweepctl(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sweepctl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("sweepctl runs");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&out.stderr);
    if !stderr.trim().is_empty() {
        eprint!("{stderr}");
    }
    (out.status.code().unwrap_or(-1), stdout)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::Reader::from_path(path).expect("trajectory csv exists");
    let header = reader.headers().unwrap().iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn cli_run(command: &str, dir: &Path, key: &str, extra: &[&str]) -> Run {
    let dir_text = dir.to_str().unwrap().to_string();
    let mut args = vec![command];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--output-dir", &dir_text]);
    let started = Instant::now();
    let (code, stdout) = sweepctl(&args);
    println!("    [{command} {} finished in {:.0} s]", extra.join(" "), started.elapsed().as_secs_f64());
    let report_path = dir.join(format!("{key}-report.json"));
    let report_text = std::fs::read_to_string(&report_path).unwrap_or_default();
    let report = serde_json::from_str(&report_text).unwrap_or(Value::Null);
    let csv_name = if command == "compare-exact" { "compare.csv" } else { "trajectory.csv" };
    let csv_path = dir.join(format!("{key}-{csv_name}"));
    let (header, csv) = if csv_path.exists() { read_csv(&csv_path) } else { (Vec::new(), Vec::new()) };
    Run {
        code,
        stdout,
        report,
        report_text,
        csv,
        header,
    }
}

fn final_gamma(report: &Value) -> f64 {
    report["levels"].as_array().and_then(|l| l.last()).map_or(f64::NAN, |l| l["level"]["gamma"].as_f64().unwrap())
}

fn final_cost(report: &Value) -> f64 {
    report["final_cost"].as_f64().unwrap_or(f64::NAN)
}

fn stop_reason(report: &Value) -> String {
    report["stop_reason"].as_str().unwrap_or("missing").to_string()
}

fn cost_trace(report: &Value) -> String {
    report["levels"]
        .as_array()
        .map(|levels| {
            levels
                .iter()
                .map(|l| format!("{}:{:.5}", l["level"]["gamma"], l["cost"].as_f64().unwrap_or(f64::NAN)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .unwrap_or_default()
}

fn printed(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or(f64::NAN)
}

fn strip_wall_time(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_time_secs");
            map.values_mut().for_each(strip_wall_time);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

fn example_run(label: &'static str, run: &Run, gamma_ok: impl Fn(f64) -> bool, cost_lo: f64, cost_hi: f64) -> Outcome {
    let gamma = final_gamma(&run.report);
    let cost = final_cost(&run.report);
    let reason = stop_reason(&run.report);
    let passed = run.code == 0 && reason == "CostConverged" && gamma_ok(gamma) && (cost_lo..=cost_hi).contains(&cost);
    outcome(
        label,
        passed,
        format!(
            "exit {}, stop {reason}, final gamma {gamma}, final cost {cost:.6}; trace {}",
            run.code,
            cost_trace(&run.report)
        ),
    )
}

fn compare_run(label: &'static str, run: &Run, gap_limit: f64) -> Outcome {
    let sup = printed(&run.stdout, "sup_distance:");
    let gap = printed(&run.stdout, "cost_gap:");
    let report_sup = run.report["comparison"]["sup_distance"].as_f64().unwrap_or(f64::NAN);
    let passed = sup <= 0.15 && gap <= gap_limit && (sup - report_sup).abs() <= 1e-12 * report_sup.abs() && run.header.iter().any(|h| h == "exact_x1");
    outcome(
        label,
        passed,
        format!("sup distance {sup:.5} (limit 0.15), cost gap {gap:.5} (limit {gap_limit})"),
    )
}

/// Containment, ξ and velocity along the final trajectory of a converged run.
fn trajectory_invariants(run: &Run) -> Outcome {
    let levels = run.report["levels"].as_array().cloned().unwrap_or_default();
    let all_checks_pass = !levels.is_empty()
        && levels.iter().all(|l| l["level"]["gamma"].as_f64().unwrap() >= 40.0 && l["invariants"]["passed"] == true);
    let last = levels.last().cloned().unwrap_or(Value::Null);
    let alpha = last["level"]["alpha"].as_f64().unwrap_or(f64::NAN);
    let col = |name: &str| run.header.iter().position(|h| h == name).expect("column present");
    let (psi, xi) = (col("psi_smooth"), col("xi_total"));
    let outside = run.csv.iter().filter(|row| row[psi] > -alpha).count();
    let max_xi = run.csv.iter().map(|row| row[xi]).fold(0.0, f64::max);
    let velocity = last["invariants"]["checks"]
        .as_array()
        .and_then(|c| c.iter().find(|c| c["name"] == "velocity_bound"))
        .map_or(f64::NAN, |c| 385.0 * 1.05 - c["worst_margin"].as_f64().unwrap());
    let passed = all_checks_pass && outside == 0 && max_xi <= 36.75 && velocity <= 385.0 * 1.05 && !run.csv.is_empty();
    outcome(
        "4e",
        passed,
        format!(
            "{} samples, {outside} outside C^γ(k), max ξ {max_xi:.4} (limit 36.75), max field norm {velocity:.3} (limit {:.2}), per-level verdicts {}",
            run.csv.len(),
            385.0 * 1.05,
            if all_checks_pass { "all pass" } else { "not all pass" }
        ),
    )
}

fn check_entry<'a>(report: &'a Value, name: &str) -> Option<&'a Value> {
    report["summary"]["checks"].as_array()?.iter().find(|c| c["name"] == name)
}

fn geometry_criteria() -> Vec<Outcome> {
    let dir = work_dir("check");
    let dir_text = dir.to_str().unwrap().to_string();
    let (code, _) = sweepctl(&["check", "--problem", "two-spheres", "--samples", "10000", "--output-dir", &dir_text]);
    let text = std::fs::read_to_string(dir.join("two-spheres-check.json")).unwrap_or_default();
    let report: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
    let summary = |names: &[&str], min_samples: u64| -> (bool, String) {
        let mut ok = code == 0;
        let mut parts = Vec::new();
        for name in names {
            match check_entry(&report, name) {
                Some(c) => {
                    let samples = c["samples"].as_u64().unwrap();
                    let violations = c["violations"].as_u64().unwrap();
                    ok &= violations == 0 && samples >= min_samples;
                    parts.push(format!("{name}: {violations}/{samples} violations"));
                }
                None => {
                    ok = false;
                    parts.push(format!("{name}: missing"));
                }
            }
        }
        (ok, parts.join(", "))
    };
    let (a, a_text) = summary(&["sandwich_lower", "sandwich_upper"], 30_000);
    let (b, b_text) = summary(&["gamma_monotonicity"], 20_000);
    let (c, c_text) = summary(&["component_gradient", "smooth_gradient"], 1_000);
    let (d, d_text) = summary(&["field_form_agreement"], 3_000);
    vec![
        outcome("4a", a, a_text),
        outcome("4b", b, b_text),
        outcome("4c", c, c_text),
        outcome("4d", d, d_text),
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Distance from `v` to the cone `{w : ⟨gᵢ, w⟩ ≤ 0}` by maximizing `⟨v, w⟩`
/// over unit feasible directions: a dense Fibonacci sweep, then a shrinking
/// random local search.
fn brute_force_cone_distance(grads: &[Vec<f64>], v: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let feasible = |w: &[f64]| grads.iter().all(|g| dot(g, w) <= 0.0);
    let count = 20_000;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..count {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
        let rho = (1.0 - z * z).sqrt();
        let w = vec![rho * (golden * i as f64).cos(), rho * (golden * i as f64).sin(), z];
        if feasible(&w) && best.as_ref().map_or(true, |(s, _)| dot(v, &w) > *s) {
            best = Some((dot(v, &w), w));
        }
    }
    let Some((mut score, mut w)) = best else {
        return dot(v, v).sqrt();
    };
    let mut radius = 0.05;
    while radius > 1e-9 {
        for _ in 0..200 {
            let mut trial: Vec<f64> = w.iter().map(|x| x + radius * rng.gen_range(-1.0..1.0)).collect();
            let len = dot(&trial, &trial).sqrt();
            trial.iter_mut().for_each(|x| *x /= len);
            if feasible(&trial) && dot(v, &trial) > score {
                score = dot(v, &trial);
                w = trial;
            }
        }
        radius *= 0.5;
    }
    (dot(v, v) - score.max(0.0).powi(2)).max(0.0).sqrt()
}

fn projection_criterion() -> Outcome {
    let entry = catalog::lookup("two-spheres").unwrap();
    let set = entry.problem.set();
    let x0 = entry.problem.x0();
    let grads: Vec<Vec<f64>> = (0..2).map(|i| set.component_gradient(i, x0).unwrap()).collect();
    let v: Vec<f64> = grads[0].iter().map(|g| -g).collect();
    let p = project_tangent_cone(&grads, &v, 1e-9).unwrap();
    let expected = [144.0 / 25.0, 0.0, -192.0 / 25.0];
    let p_err = p.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let d = inward_direction(set, x0, &ToleranceConfig::default()).unwrap();
    let unit: Vec<f64> = d.direction.clone();
    let d_err = unit.iter().zip([0.0, 0.0, -1.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut cones = 0;
    while cones < 100 {
        let r = rng.gen_range(1..=3);
        let grads: Vec<Vec<f64>> = (0..r).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        if grads.iter().any(|g| dot(g, g) < 1e-2) {
            continue;
        }
        let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = project_tangent_cone(&grads, &v, 1e-9).unwrap();
        let ours = v.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let brute = brute_force_cone_distance(&grads, &v, &mut rng);
        worst = worst.max((ours - brute).abs());
        cones += 1;
    }
    outcome(
        "5",
        p_err <= 1e-12 && d_err <= 1e-12 && worst <= 1e-3,
        format!("projection error {p_err:.1e}, direction error {d_err:.1e}, worst distance gap over {cones} random cones {worst:.2e}"),
    )
}

fn smooth_case_criterion() -> Outcome {
    let entry = catalog::lookup("unit-ball-1").unwrap();
    let problem = &entry.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_psi = 0.0f64;
    let mut worst_field = 0.0f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.2..1.2)).collect();
        let u: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gamma = rng.gen_range(4.0..200.0);
        worst_psi = worst_psi.max((problem.set().psi_smooth(gamma, &x).unwrap() - problem.set().psi_max(&x).unwrap()).abs());
        if problem.set().penalty_weights(gamma, &x).unwrap().clamped > 0 {
            continue;
        }
        let field = PenalizedField::new(problem, make_level(&problem.penalty_constants(), gamma, 0).unwrap());
        let a = field.field_multi(&x, &u).unwrap();
        let b = field.field_smooth(&x, &u).unwrap();
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        worst_field = worst_field.max(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale);
    }
    let run = cli_run("solve", &work_dir("unit-ball"), "unit-ball-1", &["--problem", "unit-ball-1"]);
    let levels = run.report["levels"].as_array().cloned().unwrap_or_default();
    let clean = !levels.is_empty() && levels.iter().all(|l| l["invariants"]["passed"] == true);
    outcome(
        "6",
        worst_psi <= 1e-14 && worst_field <= 1e-14 && run.code == 0 && clean,
        format!(
            "|ψ_γ − ψ| ≤ {worst_psi:.1e}, field forms differ by ≤ {worst_field:.1e}, solve exit {} after {} levels, cost {:.6}, invariants {}",
            run.code,
            levels.len(),
            final_cost(&run.report),
            if clean { "clean" } else { "violated" }
        ),
    )
}

fn rk4_order_criterion() -> Outcome {
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
    let errors: Vec<f64> = (4..8).map(|k| error(h / (1 << k) as f64)).collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    outcome("7", min >= 3.7, format!("observed orders {orders:.3?}, minimum {min:.3}"))
}

fn main() {
    let started = Instant::now();
    let mut results = Vec::new();

    results.push(projection_criterion());
    results.push(rk4_order_criterion());
    results.extend(geometry_criteria());
    results.push(smooth_case_criterion());

    let example_dir = work_dir("solve-eps-0.01");
    let mut args = EXAMPLE_ARGS.to_vec();
    args.extend_from_slice(&["--eps", "0.01"]);
    let first = cli_run("solve", &example_dir, "two-spheres", &args);
    results.push(example_run("1", &first, |g| g == 60.0, -9.0, -8.85));
    results.push(trajectory_invariants(&first));

    let second = cli_run("solve", &example_dir, "two-spheres", &args);
    let (mut a, mut b) = (first.report.clone(), second.report.clone());
    strip_wall_time(&mut a);
    strip_wall_time(&mut b);
    let identical = a != Value::Null && a == b && first.code == second.code;
    let text_identical = {
        let strip = |t: &str| {
            t.lines()
                .filter(|l| !l.trim_start().starts_with("\"wall_time_secs\""))
                .collect::<Vec<_>>()
                .join("\n")
        };
        strip(&first.report_text) == strip(&second.report_text)
    };
    results.push(outcome(
        "8",
        identical && text_identical,
        format!(
            "reports {} after removing wall time",
            if identical && text_identical { "byte-identical" } else { "differ" }
        ),
    ));

    let compare_coarse = cli_run("compare-exact", &work_dir("compare-eps-0.01"), "two-spheres", &args);
    results.push(compare_run("3 (eps 0.01)", &compare_coarse, 0.15));

    let mut fine_args = EXAMPLE_ARGS.to_vec();
    fine_args.extend_from_slice(&["--eps", "0.001"]);
    let compare_fine = cli_run("compare-exact", &work_dir("compare-eps-0.001"), "two-spheres", &fine_args);
    results.push(example_run("2", &compare_fine, |g| (g - 180.0).abs() <= 10.0, -9.0, -8.90));
    results.push(compare_run("3 (eps 0.001)", &compare_fine, 0.05));

    println!();
    println!("acceptance summary ({:.0} s):", started.elapsed().as_secs_f64());
    let mut failed = Vec::new();
    for r in &results {
        println!("  {:<14} {}", r.label, if r.passed { "PASS" } else { "FAIL" });
        if !r.passed {
            failed.push(format!("{}: {}", r.label, r.detail));
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria:\n  {}", failed.join("\n  "));
        std::process::exit(1);
    }
}
