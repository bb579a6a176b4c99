use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sweep_core::continuation::ContinuationOptions;
use sweep_core::integrator::IntegratorOptions;
use sweep_core::optimizer::{LevelOptions, NelderMeadOptions};
use sweep_core::ToleranceConfig;

/// Everything that determines a run. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<String>,
    #[serde(rename = "N")]
    pub intervals: usize,
    pub eps: f64,
    pub gamma0: f64,
    pub delta: f64,
    pub rk4_step: f64,
    pub max_levels: usize,
    pub strict: bool,
    pub cold_start: bool,
    pub time_budget_secs: Option<f64>,
    /// Keep every K-th RK4 substep in exported trajectories.
    pub keep_every: usize,
    pub max_halvings: u32,
    pub nelder_mead: NelderMeadOptions,
    pub tolerances: ToleranceConfig,
    /// Seed for diagnostic sampling.
    pub seed: u64,
    /// Sampled points for the geometry checks.
    pub check_samples: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = ContinuationOptions::default();
        let integrator = IntegratorOptions::default();
        Self {
            problem: None,
            intervals: solver.intervals,
            eps: solver.eps,
            gamma0: solver.gamma0,
            delta: solver.delta,
            rk4_step: integrator.step,
            max_levels: solver.max_levels,
            strict: solver.strict,
            cold_start: solver.cold_start,
            time_budget_secs: solver.time_budget_secs,
            keep_every: integrator.keep_every,
            max_halvings: integrator.max_halvings,
            nelder_mead: NelderMeadOptions::default(),
            tolerances: ToleranceConfig::default(),
            seed: 0,
            check_samples: 10_000,
            output_dir: PathBuf::from("sweep-out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn problem_key(&self) -> anyhow::Result<&str> {
        match &self.problem {
            Some(key) => Ok(key),
            None => bail!(
                "no problem selected; pass --problem with one of: {}",
                sweep_core::catalog::KEYS.join(", ")
            ),
        }
    }

    pub fn solver_options(&self) -> ContinuationOptions {
        ContinuationOptions {
            intervals: self.intervals,
            eps: self.eps,
            gamma0: self.gamma0,
            delta: self.delta,
            max_levels: self.max_levels,
            strict: self.strict,
            cold_start: self.cold_start,
            time_budget_secs: self.time_budget_secs,
            level: LevelOptions {
                integrator: IntegratorOptions {
                    step: self.rk4_step,
                    keep_every: self.keep_every,
                    max_halvings: self.max_halvings,
                },
                nelder_mead: self.nelder_mead,
                tolerances: self.tolerances,
            },
        }
    }

    /// Rejects values the solver modules would refuse later.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.solver_options().validate()?;
        if self.keep_every == 0 {
            bail!("keep_every must be at least 1");
        }
        let nm = &self.nelder_mead;
        if !(nm.f_tol >= 0.0) || !(nm.x_tol >= 0.0) {
            bail!("nelder_mead tolerances must be nonnegative");
        }
        if !(nm.initial_step > 0.0 && nm.initial_step <= 1.0) {
            bail!("nelder_mead.initial_step must lie in (0, 1], got {}", nm.initial_step);
        }
        if nm.max_evals == Some(0) {
            bail!("nelder_mead.max_evals must be positive");
        }
        if let Some(b) = self.time_budget_secs {
            if !(b > 0.0) {
                bail!("time_budget_secs must be positive, got {b}");
            }
        }
        if self.check_samples == 0 {
            bail!("check_samples must be positive");
        }
        let t = &self.tolerances;
        let values = [
            t.active_set,
            t.interior_band,
            t.containment,
            t.xi_relative,
            t.velocity_relative,
            t.projection_kkt,
            t.inward_min_norm,
            t.bound_slack,
            t.smoothing_abs,
            t.gradient_rel,
            t.field_rel,
        ];
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            bail!("tolerances must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&t.violation_rate) {
            bail!("tolerances.violation_rate must lie in [0, 1]");
        }
        Ok(())
    }
}
