//! Run hyperparameters, their defaults, flat key=value config parsing, and
//! the canonical echo used in run summaries.
//!
//! Every field here affects the optimization trajectory, so the echo plus
//! the seed fully determines a run's history.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Step-size scaling factor (problem registry fills the default).
    pub theta: f64,
    /// Gradient sample size per step.
    pub samples: usize,
    /// Initial move limit.
    pub move0: f64,
    /// Recalibration: monitoring starts after this step.
    pub n_rst: u32,
    /// Recalibration: minimum steps between recalibrations.
    pub delta_rst: u32,
    /// Recalibration: aggregate-change threshold.
    pub eps_rst: f64,
    /// Damping: first step the damping check may fire.
    pub n_damp: u32,
    /// Damping: effective-step-ratio threshold.
    pub eps_damp: f64,
    /// Damping: move-limit reduction factor.
    pub tau: f64,
    /// Damping: history window size.
    pub n_d: u32,
    /// Termination: hard step cap.
    pub n_max: u32,
    /// Termination: earliest stopping step.
    pub n_min: u32,
    /// Termination: infinity-norm tolerance on the aggregate change.
    pub eps: f64,
    /// Bound estimation: gradient evaluations per calibration.
    pub n_m: u32,
    /// Final-evaluation sample count.
    pub eval_samples: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            theta: 1.0,
            samples: 2,
            move0: 0.2,
            n_rst: 100,
            delta_rst: 100,
            eps_rst: 0.025,
            n_damp: 400,
            eps_damp: 0.05,
            tau: 2.0,
            n_d: 100,
            n_max: 500,
            n_min: 400,
            eps: 0.01,
            n_m: 6,
            eval_samples: 10_000,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::Config("theta must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::Config(
                "gradient estimation requires at least two samples per step".into(),
            ));
        }
        if !(self.move0 > 0.0 && self.move0 <= 1.0) {
            return Err(Error::Config("move0 must lie in (0, 1]".into()));
        }
        if self.delta_rst < 1 {
            return Err(Error::Config("delta_rst must be >= 1".into()));
        }
        if !(self.tau > 1.0) {
            return Err(Error::Config("tau must exceed 1".into()));
        }
        if self.n_d < 2 {
            return Err(Error::Config("n_d must be >= 2".into()));
        }
        if self.n_min > self.n_max {
            return Err(Error::Config("n_min must not exceed n_max".into()));
        }
        if !(self.eps >= 0.0) || !(self.eps_rst >= 0.0) || !(self.eps_damp >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        if self.n_m < 1 {
            return Err(Error::Config("n_m must be >= 1".into()));
        }
        if self.eval_samples < 2 {
            return Err(Error::Config("eval_samples must be >= 2".into()));
        }
        Ok(())
    }

    /// Applies `key = value` assignments from a flat config file. Unknown
    /// keys are errors so typos cannot silently change a run. Lines may be
    /// empty or start with '#'.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn f(v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid number {v:?}")))
        }
        fn u(v: &str) -> Result<u32> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid integer {v:?}")))
        }
        match key {
            "theta" => self.theta = f(value)?,
            "samples" | "m" => self.samples = u(value)? as usize,
            "move0" => self.move0 = f(value)?,
            "n_rst" => self.n_rst = u(value)?,
            "delta_rst" => self.delta_rst = u(value)?,
            "eps_rst" => self.eps_rst = f(value)?,
            "n_damp" => self.n_damp = u(value)?,
            "eps_damp" => self.eps_damp = f(value)?,
            "tau" => self.tau = f(value)?,
            "n_d" => self.n_d = u(value)?,
            "n_max" => self.n_max = u(value)?,
            "n_min" => self.n_min = u(value)?,
            "eps" => self.eps = f(value)?,
            "n_m" => self.n_m = u(value)?,
            "eval_samples" => self.eval_samples = u(value)? as usize,
            other => {
                return Err(Error::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Canonical key=value echo in fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("theta".into(), format!("{}", self.theta)),
            ("samples".into(), format!("{}", self.samples)),
            ("move0".into(), format!("{}", self.move0)),
            ("n_rst".into(), format!("{}", self.n_rst)),
            ("delta_rst".into(), format!("{}", self.delta_rst)),
            ("eps_rst".into(), format!("{}", self.eps_rst)),
            ("n_damp".into(), format!("{}", self.n_damp)),
            ("eps_damp".into(), format!("{}", self.eps_damp)),
            ("tau".into(), format!("{}", self.tau)),
            ("n_d".into(), format!("{}", self.n_d)),
            ("n_max".into(), format!("{}", self.n_max)),
            ("n_min".into(), format!("{}", self.n_min)),
            ("eps".into(), format!("{}", self.eps)),
            ("n_m".into(), format!("{}", self.n_m)),
            ("eval_samples".into(), format!("{}", self.eval_samples)),
        ]
    }
}
