use std::io::Write;

use sweep_core::integrator::Trajectory;

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,x1..xn,psi_smooth,xi_total[,exact_x1..]`, one row per sample.
pub fn write_trajectory<W: Write>(
    out: W,
    traj: &Trajectory,
    exact: Option<&dyn Fn(f64) -> Vec<f64>>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = traj.samples.first().map_or(0, |s| s.state.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("psi_smooth".into());
    header.push("xi_total".into());
    if exact.is_some() {
        header.extend((1..=n).map(|i| format!("exact_x{i}")));
    }
    w.write_record(&header)?;
    for s in &traj.samples {
        let mut row = vec![num(s.t)];
        row.extend(s.state.iter().map(|v| num(*v)));
        row.push(num(s.psi_smooth));
        row.push(num(s.xi_total));
        if let Some(f) = exact {
            row.extend(f(s.t).into_iter().map(num));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
