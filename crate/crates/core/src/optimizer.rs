//! The accelerated mirror-descent stochastic approximation loop: momentum
//! sequences, step-size policies and their sample-based calibration,
//! adaptive recalibration and damping, termination, and run records.

use crate::config::Hyperparams;
use crate::density::{build_filter, scale_factors, simp_modulus, FilterMatrix, VariableScaling};
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_gradient_for_loads, evaluate_design, DesignEvaluation, EvalSummary,
};
use crate::loads::RtoWeights;
use crate::problems::BuiltProblem;
use crate::prox::{mdsa_step, ProxInput};
use crate::rng::{Purpose, StreamKey};
use std::collections::VecDeque;
use std::time::Instant;

/// Update rule variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Momentum-accelerated stochastic mirror descent (the default).
    Accelerated,
    /// Plain stochastic mirror descent with a constant step.
    Plain,
    /// Large-sample reference: the same prox update driven by a
    /// 1000-sample gradient over a short horizon.
    McReference,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "acmdsa" => Ok(Mode::Accelerated),
            "mdsa" => Ok(Mode::Plain),
            "mc" => Ok(Mode::McReference),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected acmdsa, mdsa, or mc)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Accelerated => "acmdsa",
            Mode::Plain => "mdsa",
            Mode::McReference => "mc",
        }
    }

    fn accelerated(&self) -> bool {
        !matches!(self, Mode::Plain)
    }
}

/// Step-size state: the calibrated base step and the bound estimates it
/// came from.
#[derive(Debug, Clone)]
pub struct StepPolicy {
    pub theta: f64,
    pub eta_bar: f64,
    /// Sample-based bound on the scaled-gradient infinity norm.
    pub grad_bound: f64,
    /// Sample-based bound on its deviation.
    pub noise_bound: f64,
    /// Entropy diameter sqrt(ln n).
    pub diameter: f64,
    /// Horizon N entering the base-step formula.
    pub horizon: u32,
    calibrated: bool,
}

impl StepPolicy {
    pub fn uncalibrated(theta: f64, n_vars: usize, horizon: u32) -> StepPolicy {
        StepPolicy {
            theta,
            eta_bar: 0.0,
            grad_bound: 0.0,
            noise_bound: 0.0,
            diameter: (n_vars as f64).ln().sqrt(),
            horizon,
            calibrated: false,
        }
    }

    /// Installs fresh bound estimates and recomputes the base step.
    pub fn recalibrate(&mut self, grad_bound: f64, noise_bound: f64, mode: Mode) -> Result<()> {
        if !(grad_bound > 0.0) {
            return Err(Error::Calibration(
                "gradient bound estimate is zero; base step undefined".into(),
            ));
        }
        self.grad_bound = grad_bound;
        self.noise_bound = noise_bound;
        self.eta_bar = match mode {
            Mode::Accelerated | Mode::McReference => {
                accelerated_base_step(self.diameter, self.horizon, grad_bound, noise_bound)
            }
            Mode::Plain => plain_base_step(self.diameter, self.horizon, grad_bound),
        };
        self.calibrated = true;
        Ok(())
    }

    /// Step size at inner step k_in (1-based).
    pub fn eta(&self, k_in: u32, mode: Mode) -> Result<f64> {
        if !self.calibrated {
            return Err(Error::Calibration("step policy not calibrated".into()));
        }
        Ok(match mode {
            Mode::Accelerated | Mode::McReference => {
                self.theta * self.eta_bar * (k_in as f64 + 1.0) / 2.0
            }
            Mode::Plain => self.theta * self.eta_bar,
        })
    }
}

/// Momentum weight beta at inner step k_in (1-based).
pub fn beta(k_in: u32) -> f64 {
    (k_in as f64 + 1.0) / 2.0
}

/// Base step of the accelerated policy with strong-convexity modulus 1:
/// sqrt(6) D / ((N+2)^1.5 sqrt(4 M^2 + Sigma^2)).
pub fn accelerated_base_step(diameter: f64, horizon: u32, m: f64, sigma: f64) -> f64 {
    6.0f64.sqrt() * diameter
        / ((horizon as f64 + 2.0).powf(1.5) * (4.0 * m * m + sigma * sigma).sqrt())
}

/// Constant base step of the plain policy: sqrt(2) D / (M sqrt(N)).
pub fn plain_base_step(diameter: f64, horizon: u32, m: f64) -> f64 {
    2.0f64.sqrt() * diameter / (m * (horizon as f64).sqrt())
}

/// Bound estimates from a set of independent scaled-gradient evaluations:
/// M = rms of infinity norms, Sigma = rms of infinity norms of deviations
/// from the componentwise mean.
pub fn calibrate_bounds(estimates: &[Vec<f64>]) -> (f64, f64) {
    let n_m = estimates.len();
    assert!(n_m >= 1);
    let n = estimates[0].len();
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let m_sq: f64 = estimates.iter().map(|g| inf(g).powi(2)).sum::<f64>() / n_m as f64;
    let mut mean = vec![0.0; n];
    for g in estimates {
        for i in 0..n {
            mean[i] += g[i];
        }
    }
    for v in &mut mean {
        *v /= n_m as f64;
    }
    let s_sq: f64 = estimates
        .iter()
        .map(|g| {
            let dev: f64 = g
                .iter()
                .zip(&mean)
                .fold(0.0f64, |a, (gi, mi)| a.max((gi - mi).abs()));
            dev * dev
        })
        .sum::<f64>()
        / n_m as f64;
    (m_sq.sqrt(), s_sq.sqrt())
}

/// Recalibration trigger configuration.
#[derive(Debug, Clone, Copy)]
pub struct RecalConfig {
    pub n_rst: u32,
    pub delta_rst: u32,
    pub eps_rst: f64,
}

/// True when the aggregate design has stalled and the step counter may be
/// reset.
pub fn should_recalibrate(k: u32, k_in: u32, delta_ag_l2: f64, cfg: &RecalConfig) -> bool {
    k >= cfg.n_rst && k_in >= cfg.delta_rst && delta_ag_l2 < cfg.eps_rst
}

/// Effective step ratio over a modulus-history window of length n_d + 1:
/// the average change across the window divided by the latest change. A
/// vanishing latest change counts as fully stalled (ratio 0).
pub fn effective_step_ratio(window: &[Vec<f64>]) -> f64 {
    let n_d = window.len() - 1;
    assert!(n_d >= 2, "window must hold at least 3 modulus vectors");
    let norm_diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let latest = &window[n_d];
    let numerator = norm_diff(latest, &window[1]) / n_d as f64;
    let denominator = norm_diff(latest, &window[n_d - 1]);
    if denominator == 0.0 {
        log::debug!("effective step ratio: zero step denominator, treating as stalled");
        return 0.0;
    }
    numerator / denominator
}

/// Move-limit state with the modulus-history ring buffer feeding the
/// effective step ratio.
#[derive(Debug, Clone)]
pub struct DampingState {
    pub move_limit: f64,
    pub tau: f64,
    pub n_d: u32,
    pub eps_damp: f64,
    pub n_damp: u32,
    history: VecDeque<Vec<f64>>,
}

impl DampingState {
    pub fn new(move0: f64, tau: f64, n_d: u32, eps_damp: f64, n_damp: u32) -> DampingState {
        DampingState {
            move_limit: move0,
            tau,
            n_d,
            eps_damp,
            n_damp,
            history: VecDeque::with_capacity(n_d as usize + 1),
        }
    }

    pub fn push_moduli(&mut self, moduli: Vec<f64>) {
        if self.history.len() == self.n_d as usize + 1 {
            self.history.pop_front();
        }
        self.history.push_back(moduli);
    }

    pub fn ratio(&self) -> Option<f64> {
        if self.history.len() < self.n_d as usize + 1 {
            return None;
        }
        let window: Vec<Vec<f64>> = self.history.iter().cloned().collect();
        Some(effective_step_ratio(&window))
    }

    /// Applies at most one move-limit reduction for step k; returns whether
    /// it fired.
    pub fn maybe_damp(&mut self, k: u32) -> bool {
        if k < self.n_damp {
            return false;
        }
        let Some(r) = self.ratio() else {
            return false;
        };
        if r <= self.eps_damp {
            self.move_limit /= self.tau;
            true
        } else {
            false
        }
    }
}

/// One emitted history row; field order matches the history.csv columns.
#[derive(Debug, Clone)]
pub struct StepRow {
    pub step: u32,
    pub objective: f64,
    pub mean: f64,
    pub variance: f64,
    pub eta: f64,
    pub move_limit: f64,
    pub delta_ag_l2: f64,
    pub recalibrated: bool,
    pub damped: bool,
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub history: Vec<StepRow>,
    /// Final raw design (the aggregate sequence for accelerated modes).
    pub design: Vec<f64>,
    /// Final physical (filtered) densities.
    pub design_physical: Vec<f64>,
    pub eval: EvalSummary,
    pub n_step: u32,
    pub n_solve: u64,
    pub n_recal: u32,
    pub final_move: f64,
    pub final_radius: f64,
    pub wall_seconds: f64,
    pub terminated_early: bool,
}

/// Rescales a scaled design onto the simplex after the upper bounds
/// changed: finds s with sum(min(x * s, upper)) = 1.
fn renormalize_scaled(x_scaled: &mut [f64], upper: &[f64]) -> Result<()> {
    let cap_sum: f64 = upper.iter().sum();
    if cap_sum < 1.0 {
        return Err(Error::Constraint(
            "scaled upper bounds sum below one; volume unreachable".into(),
        ));
    }
    let sum_at = |s: f64| -> f64 {
        x_scaled
            .iter()
            .zip(upper)
            .map(|(&x, &u)| (x * s).min(u))
            .sum()
    };
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut grow = 0;
    while sum_at(hi) < 1.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Numerical(
                "renormalization scale diverged (design is numerically zero)".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (sum_at(hi) - 1.0).abs() <= 1e-13 {
            break;
        }
    }
    let s = hi;
    for (x, &u) in x_scaled.iter_mut().zip(upper) {
        *x = (*x * s).min(u);
    }
    Ok(())
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn linf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Runs N_M independent m-sample gradient estimates at the current design
/// and installs fresh bounds into the policy. All estimates share the
/// factorization of the evaluation point. Returns the number of solves.
fn calibrate(
    policy: &mut StepPolicy,
    eval: &DesignEvaluation,
    filter: &FilterMatrix,
    scaling: &VariableScaling,
    problem: &BuiltProblem,
    weights: &RtoWeights,
    hyper: &Hyperparams,
    mode: Mode,
    seed: u64,
    step: u64,
) -> Result<u64> {
    let m = effective_samples(hyper, mode);
    let estimates: Vec<Vec<f64>> = (0..hyper.n_m)
        .map(|i| {
            let loads: Vec<_> = (0..m)
                .map(|j| {
                    let key = StreamKey::new(
                        seed,
                        Purpose::Calibration,
                        step,
                        ((i as u64) << 32) | j as u64,
                    );
                    problem.model.sample(&problem.fem.mesh, key)
                })
                .collect();
            estimate_gradient_for_loads(eval, filter, scaling, weights, &loads)
                .map(|e| e.grad_scaled)
        })
        .collect::<Result<_>>()?;
    let (grad_bound, noise_bound) = calibrate_bounds(&estimates);
    policy.recalibrate(grad_bound, noise_bound, mode)?;
    Ok((m * hyper.n_m as usize) as u64)
}

fn effective_samples(hyper: &Hyperparams, _mode: Mode) -> usize {
    hyper.samples
}

/// Executes one optimization run.
pub fn run(
    problem: &BuiltProblem,
    hyper: &Hyperparams,
    kappa: f64,
    mode: Mode,
    seed: u64,
) -> Result<RunRecord> {
    hyper.validate()?;
    problem.material.validate()?;
    let start = Instant::now();
    let fem = &problem.fem;
    let mesh = &fem.mesh;
    let n = mesh.n_elements();
    let m = effective_samples(hyper, mode);
    let weights = RtoWeights::new(kappa, &problem.model, mesh, &fem.bc, problem.material.e0)?;

    let mut radius = problem.schedule.radius_at(1);
    let mut filter = build_filter(mesh, radius)?;
    let mut scaling = scale_factors(mesh, &filter, problem.vf)?;

    // Uniform feasible start.
    let x0 = vec![problem.vf; n];
    let mut x_scaled = scaling.scale(&x0);
    let mut x_ag_scaled = x_scaled.clone();
    let mut prev_ag = scaling.back_scale(&x_ag_scaled);

    let mut policy = StepPolicy::uncalibrated(hyper.theta, n, hyper.n_max);
    let mut n_solve: u64 = 0;
    {
        let eval = DesignEvaluation::new(fem, &filter, problem.material, &x0)
            .map_err(|e| e.at_step(0))?;
        n_solve += calibrate(
            &mut policy, &eval, &filter, &scaling, problem, &weights, hyper, mode, seed, 0,
        )
        .map_err(|e| e.at_step(0))?;
    }

    let mut damping = DampingState::new(
        hyper.move0,
        hyper.tau,
        hyper.n_d,
        hyper.eps_damp,
        hyper.n_damp,
    );
    {
        let xbar0 = filter.apply(&x0);
        damping.push_moduli(simp_modulus(&xbar0, &problem.material));
    }
    let recal_cfg = RecalConfig {
        n_rst: hyper.n_rst,
        delta_rst: hyper.delta_rst,
        eps_rst: hyper.eps_rst,
    };

    let mut history: Vec<StepRow> = Vec::with_capacity(hyper.n_max as usize);
    let mut k_in: u32 = 1;
    let mut n_recal: u32 = 0;
    let mut terminated_early = false;
    let mut n_step: u32 = 0;

    for k in 1..=hyper.n_max {
        n_step = k;
        let beta_inv = 1.0 / beta(k_in);

        // Evaluation point: the middle sequence for accelerated modes.
        let x_md_scaled: Vec<f64> = if mode.accelerated() {
            x_scaled
                .iter()
                .zip(&x_ag_scaled)
                .map(|(&xs, &ag)| beta_inv * xs + (1.0 - beta_inv) * ag)
                .collect()
        } else {
            x_scaled.clone()
        };
        let x_md = scaling.back_scale(&x_md_scaled);

        let eval = DesignEvaluation::new(fem, &filter, problem.material, &x_md)
            .map_err(|e| e.at_step(k))?;
        let loads: Vec<_> = (0..m)
            .map(|j| {
                let key = StreamKey::new(seed, Purpose::Gradient, k as u64, j as u64);
                problem.model.sample(mesh, key)
            })
            .collect();
        let est = estimate_gradient_for_loads(&eval, &filter, &scaling, &weights, &loads)
            .map_err(|e| e.at_step(k))?;
        n_solve += m as u64;

        let grad_scaled = match &problem.symmetry {
            Some(map) => map.symmetrize(&est.grad_scaled),
            None => est.grad_scaled.clone(),
        };

        let eta = policy.eta(k_in, mode).map_err(|e| e.at_step(k))?;
        let move_limit = damping.move_limit;
        let prox = mdsa_step(&ProxInput {
            x_scaled: &x_scaled,
            grad_scaled: &grad_scaled,
            eta,
            move_limit,
            upper: &scaling.upper,
        })
        .map_err(|e| e.at_step(k))?;

        let mut x_next_scaled = prox.x_next;
        let mut x_ag_next_scaled: Vec<f64> = if mode.accelerated() {
            x_next_scaled
                .iter()
                .zip(&x_ag_scaled)
                .map(|(&xn, &ag)| beta_inv * xn + (1.0 - beta_inv) * ag)
                .collect()
        } else {
            x_next_scaled.clone()
        };

        let x_next = scaling.back_scale(&x_next_scaled);
        let x_ag_next = scaling.back_scale(&x_ag_next_scaled);

        // Feasibility of the iterate: material volume must sit on the
        // constraint.
        let xbar_next = filter.apply(&x_next);
        let volume: f64 = xbar_next.iter().sum::<f64>() * mesh.element_volume();
        let target = problem.vf * scaling.v0;
        if ((volume - target) / target).abs() > 1e-8 {
            return Err(Error::Numerical(format!(
                "volume drifted off the constraint: {volume:.9e} vs {target:.9e}"
            ))
            .at_step(k));
        }

        let delta_ag_l2 = l2_diff(&x_ag_next, &prev_ag);
        let delta_ag_inf = linf_diff(&x_ag_next, &prev_ag);

        damping.push_moduli(simp_modulus(&xbar_next, &problem.material));

        let terminate = k >= hyper.n_min && delta_ag_inf < hyper.eps;
        let mut damped = false;
        let mut recalibrated = false;
        if !terminate {
            damped = damping.maybe_damp(k);

            if should_recalibrate(k, k_in, delta_ag_l2, &recal_cfg) {
                recalibrated = true;
                n_recal += 1;
                if mode.accelerated() {
                    x_next_scaled = x_ag_next_scaled.clone();
                }
                let x_recal = scaling.back_scale(&x_next_scaled);
                let eval = DesignEvaluation::new(fem, &filter, problem.material, &x_recal)
                    .map_err(|e| e.at_step(k))?;
                n_solve += calibrate(
                    &mut policy, &eval, &filter, &scaling, problem, &weights, hyper, mode, seed,
                    k as u64,
                )
                .map_err(|e| e.at_step(k))?;
            }

            // Filter continuation: rebuild and re-scale so feasibility is
            // preserved under the new bounds.
            let r_next = problem.schedule.radius_at(k + 1);
            if r_next != radius {
                radius = r_next;
                let x_raw = scaling.back_scale(&x_next_scaled);
                let ag_raw = scaling.back_scale(&x_ag_next_scaled);
                filter = build_filter(mesh, radius).map_err(|e| e.at_step(k))?;
                scaling = scale_factors(mesh, &filter, problem.vf).map_err(|e| e.at_step(k))?;
                x_next_scaled = scaling.scale(&x_raw);
                x_ag_next_scaled = scaling.scale(&ag_raw);
                renormalize_scaled(&mut x_next_scaled, &scaling.upper)
                    .map_err(|e| e.at_step(k))?;
                renormalize_scaled(&mut x_ag_next_scaled, &scaling.upper)
                    .map_err(|e| e.at_step(k))?;
            }
        }

        history.push(StepRow {
            step: k,
            objective: est.objective,
            mean: est.mean,
            variance: est.variance,
            eta,
            move_limit,
            delta_ag_l2,
            recalibrated,
            damped,
        });

        x_scaled = x_next_scaled;
        x_ag_scaled = x_ag_next_scaled;
        prev_ag = scaling.back_scale(&x_ag_scaled);

        if terminate {
            terminated_early = true;
            break;
        }
        k_in = if recalibrated { 1 } else { k_in + 1 };
    }

    // Solve accounting: every step spends m solves, every calibration
    // (initial plus one per recalibration) spends m * n_m.
    let expected = m as u64 * n_step as u64 + (m * hyper.n_m as usize) as u64 * (1 + n_recal as u64);
    assert_eq!(
        n_solve, expected,
        "solve accounting mismatch: counted {n_solve}, expected {expected}"
    );

    let design_scaled = if mode.accelerated() {
        &x_ag_scaled
    } else {
        &x_scaled
    };
    let design = scaling.back_scale(design_scaled);
    let design_physical = filter.apply(&design);
    let final_eval = DesignEvaluation::from_physical(fem, problem.material, design_physical.clone())
        .map_err(|e| e.at_step(n_step))?;
    let eval = evaluate_design(
        &final_eval,
        &problem.model,
        &weights,
        hyper.eval_samples,
        seed,
    )
    .map_err(|e| e.at_step(n_step))?;

    Ok(RunRecord {
        history,
        design,
        design_physical,
        eval,
        n_step,
        n_solve,
        n_recal,
        final_move: damping.move_limit,
        final_radius: radius,
        wall_seconds: start.elapsed().as_secs_f64(),
        terminated_early,
    })
}
