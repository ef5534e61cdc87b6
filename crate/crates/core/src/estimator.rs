//! Unbiased small-sample estimators of the mean/variance compliance
//! objective and of its gradient, plus the large-sample evaluation of a
//! fixed design.
//!
//! All estimators draw i.i.d. loads through counter-based stream keys, so
//! per-sample work can run in parallel; reductions always happen in sample
//! order, keeping results bit-identical at any worker count.

use crate::density::{chain_gradient, FilterMatrix, MaterialModel, VariableScaling};
use crate::error::{Error, Result};
use crate::fem::{compliance, DesignSolver, FemContext};
use crate::loads::{LoadModel, RtoWeights};
use crate::rng::{Purpose, StreamKey};
use rayon::prelude::*;

/// One design point prepared for any number of load solves: filtered
/// densities, SIMP moduli, and the assembled (factorized) stiffness.
pub struct DesignEvaluation<'a> {
    pub fem: &'a FemContext,
    pub material: MaterialModel,
    pub x_bar: Vec<f64>,
    solver: DesignSolver<'a>,
}

impl<'a> DesignEvaluation<'a> {
    /// Prepares a raw design x (filters it first).
    pub fn new(
        fem: &'a FemContext,
        filter: &FilterMatrix,
        material: MaterialModel,
        x: &[f64],
    ) -> Result<Self> {
        Self::from_physical(fem, material, filter.apply(x))
    }

    /// Prepares an already-filtered (physical) density field.
    pub fn from_physical(
        fem: &'a FemContext,
        material: MaterialModel,
        x_bar: Vec<f64>,
    ) -> Result<Self> {
        if x_bar.len() != fem.mesh.n_elements() {
            return Err(Error::Shape(format!(
                "density field has {} entries, mesh has {} elements",
                x_bar.len(),
                fem.mesh.n_elements()
            )));
        }
        let moduli: Vec<f64> = x_bar.iter().map(|&xb| material.modulus(xb)).collect();
        let solver = fem.assemble(&moduli)?;
        Ok(DesignEvaluation {
            fem,
            material,
            x_bar,
            solver,
        })
    }

    /// Solves one load realization given as (global dof, value) pairs and
    /// returns (compliance, free-dof displacement).
    pub fn solve_sample(&self, entries: &[(usize, f64)]) -> Result<(f64, Vec<f64>)> {
        let f = self.fem.bc.load_vector(entries);
        let u = self.solver.solve(&f)?;
        Ok((compliance(&f, &u), u))
    }

    /// Compliance gradient with respect to the filtered densities:
    /// dC/dxbar(i) = -p xbar^(p-1) (E0 - E_min) u_e^T k0 u_e.
    pub fn compliance_gradient_physical(&self, u: &[f64]) -> Vec<f64> {
        let energies = self.fem.element_energies(u);
        self.x_bar
            .iter()
            .zip(&energies)
            .map(|(&xb, &en)| -self.material.modulus_derivative(xb) * en)
            .collect()
    }
}

/// The m-sample estimate of the objective and its gradient at one design.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub m: usize,
    pub compliances: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub sigma: f64,
    pub objective: f64,
    /// Mean-part gradient w.r.t. raw densities x.
    pub grad_mean: Vec<f64>,
    /// Variance-part gradient w.r.t. raw densities x.
    pub grad_variance: Vec<f64>,
    /// Combined gradient w.r.t. x.
    pub grad: Vec<f64>,
    /// Gradient w.r.t. the scaled variables.
    pub grad_scaled: Vec<f64>,
}

/// Sample mean, unbiased variance, and weighted objective from a list of
/// compliance samples.
pub fn estimate_objective(compliances: &[f64], weights: &RtoWeights) -> Result<(f64, f64, f64)> {
    let m = compliances.len();
    if m == 0 {
        return Err(Error::Parameter("no compliance samples".into()));
    }
    if m < 2 && weights.kappa < 1.0 {
        return Err(Error::Parameter(
            "variance estimation requires at least two samples".into(),
        ));
    }
    // Coinciding samples have exactly their common value as mean and zero
    // variance; the general path would leave ulp-level residue.
    if compliances.windows(2).all(|w| w[0] == w[1]) {
        let mean = compliances[0];
        return Ok((mean, 0.0, weights.objective(mean, 0.0)));
    }
    let mean = compliances.iter().sum::<f64>() / m as f64;
    let variance = if m >= 2 {
        compliances.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    Ok((mean, variance, weights.objective(mean, variance)))
}

/// Draws m i.i.d. loads for the given step.
pub fn draw_loads(
    model: &LoadModel,
    fem: &FemContext,
    m: usize,
    seed: u64,
    purpose: Purpose,
    step: u64,
) -> Vec<Vec<(usize, f64)>> {
    (0..m)
        .map(|j| model.sample(&fem.mesh, StreamKey::new(seed, purpose, step, j as u64)))
        .collect()
}

/// Objective estimate for a fixed set of load realizations (no gradients).
pub fn objective_for_loads(
    eval: &DesignEvaluation,
    weights: &RtoWeights,
    loads: &[Vec<(usize, f64)>],
) -> Result<(f64, f64, f64)> {
    let compliances: Vec<f64> = loads
        .iter()
        .map(|entries| eval.solve_sample(entries).map(|(c, _)| c))
        .collect::<Result<_>>()?;
    estimate_objective(&compliances, weights)
}

/// Gradient estimate for a fixed set of load realizations.
///
/// The variance-part gradient is the unbiased form
/// 2/(m-1) * (sum_j C_j grad C_j - m mu_m Gmu_m), which with frozen samples
/// is exactly the gradient of the sample objective.
pub fn estimate_gradient_for_loads(
    eval: &DesignEvaluation,
    filter: &FilterMatrix,
    scaling: &VariableScaling,
    weights: &RtoWeights,
    loads: &[Vec<(usize, f64)>],
) -> Result<GradientEstimate> {
    let m = loads.len();
    if m < 2 {
        return Err(Error::Parameter(
            "gradient estimation requires at least two samples".into(),
        ));
    }
    let n = eval.x_bar.len();

    let per_sample: Vec<(f64, Vec<f64>)> = loads
        .par_iter()
        .map(|entries| {
            let (c, u) = eval.solve_sample(entries)?;
            Ok((c, eval.compliance_gradient_physical(&u)))
        })
        .collect::<Result<_>>()?;

    let compliances: Vec<f64> = per_sample.iter().map(|(c, _)| *c).collect();
    let (mean, variance, objective) = estimate_objective(&compliances, weights)?;

    let mut sum_grad = vec![0.0; n];
    let mut sum_c_grad = vec![0.0; n];
    for (c, g) in &per_sample {
        for i in 0..n {
            sum_grad[i] += g[i];
            sum_c_grad[i] += c * g[i];
        }
    }
    let inv_m = 1.0 / m as f64;
    let grad_mean_phys: Vec<f64> = sum_grad.iter().map(|v| v * inv_m).collect();
    let factor = 2.0 / (m as f64 - 1.0);
    let grad_var_phys: Vec<f64> = sum_c_grad
        .iter()
        .zip(&grad_mean_phys)
        .map(|(s, gm)| factor * (s - m as f64 * mean * gm))
        .collect();

    let grad_mean = chain_gradient(filter, &grad_mean_phys);
    let grad_variance = chain_gradient(filter, &grad_var_phys);
    let ka = weights.kappa / weights.w;
    let kv = (1.0 - weights.kappa) / (weights.w * weights.w);
    let grad: Vec<f64> = grad_mean
        .iter()
        .zip(&grad_variance)
        .map(|(gm, gv)| ka * gm + kv * gv)
        .collect();
    let grad_scaled = scaling.scale_gradient(&grad);

    Ok(GradientEstimate {
        m,
        compliances,
        mean,
        variance,
        sigma: variance.sqrt(),
        objective,
        grad_mean,
        grad_variance,
        grad,
        grad_scaled,
    })
}

/// Draws m fresh samples for `step` and estimates objective and gradient.
pub fn estimate_gradient(
    eval: &DesignEvaluation,
    filter: &FilterMatrix,
    scaling: &VariableScaling,
    model: &LoadModel,
    weights: &RtoWeights,
    m: usize,
    seed: u64,
    purpose: Purpose,
    step: u64,
) -> Result<GradientEstimate> {
    let loads = draw_loads(model, eval.fem, m, seed, purpose, step);
    estimate_gradient_for_loads(eval, filter, scaling, weights, &loads)
}

/// Large-sample evaluation of a fixed design.
#[derive(Debug, Clone, Copy)]
pub struct EvalSummary {
    pub objective: f64,
    pub mean: f64,
    pub sigma: f64,
    pub samples: usize,
}

/// Estimates (J, mu, sigma) of a fixed design with `m_eval` samples.
///
/// Point loads touch only a handful of dofs, so the compliance of every
/// sample is the quadratic form f^T K^-1 f over those dofs; solving one
/// influence column per loaded dof replaces m_eval full solves.
pub fn evaluate_design(
    eval: &DesignEvaluation,
    model: &LoadModel,
    weights: &RtoWeights,
    m_eval: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if m_eval < 2 {
        return Err(Error::Parameter(
            "design evaluation requires at least two samples".into(),
        ));
    }
    let fem = eval.fem;
    let mut loaded_free: Vec<usize> = model
        .load_dofs(&fem.mesh)
        .into_iter()
        .filter_map(|d| fem.bc.free_of(d).map(|_| d))
        .collect();
    loaded_free.sort_unstable();
    loaded_free.dedup();

    let compliances: Vec<f64> = if loaded_free.len() <= 8 {
        // Influence columns: one solve per loaded dof.
        let columns: Vec<Vec<f64>> = loaded_free
            .iter()
            .map(|&dof| {
                let f = fem.bc.load_vector(&[(dof, 1.0)]);
                eval.solver.solve(&f)
            })
            .collect::<Result<_>>()?;
        let k = loaded_free.len();
        let mut gram = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                let fb = fem.bc.free_of(loaded_free[b]).expect("free dof");
                gram[a * k + b] = columns[a][fb];
            }
        }
        (0..m_eval)
            .into_par_iter()
            .map(|j| {
                let entries =
                    model.sample(&fem.mesh, StreamKey::new(seed, Purpose::Evaluation, 0, j as u64));
                let mut amp = vec![0.0; k];
                for (dof, v) in entries {
                    if let Ok(a) = loaded_free.binary_search(&dof) {
                        amp[a] += v;
                    }
                }
                let mut c = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        c += amp[a] * gram[a * k + b] * amp[b];
                    }
                }
                c
            })
            .collect()
    } else {
        (0..m_eval)
            .into_par_iter()
            .map(|j| {
                let entries =
                    model.sample(&fem.mesh, StreamKey::new(seed, Purpose::Evaluation, 0, j as u64));
                eval.solve_sample(&entries).map(|(c, _)| c)
            })
            .collect::<Result<_>>()?
    };

    let (mean, variance, objective) = estimate_objective(&compliances, weights)?;
    Ok(EvalSummary {
        objective,
        mean,
        sigma: variance.sqrt(),
        samples: m_eval,
    })
}
