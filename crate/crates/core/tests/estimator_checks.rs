//! Estimator oracles: frozen-sample finite differences of the sampled
//! objective and statistical unbiasedness against a large-sample reference.

mod common;

use common::TestRand;
use rto_core::density::{build_filter, scale_factors, MaterialModel};
use rto_core::estimator::{
    estimate_gradient_for_loads, estimate_objective, evaluate_design, objective_for_loads,
    DesignEvaluation,
};
use rto_core::fem::{BoundaryConditions, FemContext, Mesh, SolverConfig};
use rto_core::loads::{LoadKind, LoadModel, LoadPoint, RtoWeights};
use rto_core::rng::{Purpose, StreamKey};

fn column_fixture(size: usize) -> (FemContext, LoadModel) {
    let mesh = Mesh::rectangle(size, size, 1.0).unwrap();
    let mut fixed = Vec::new();
    for ix in 0..=size {
        let (dx, dy) = mesh.node_dofs(ix, 0).unwrap();
        fixed.push(dx);
        fixed.push(dy);
    }
    let bc = BoundaryConditions::new(&mesh, fixed).unwrap();
    let fem = FemContext::new(mesh, bc, 0.3, SolverConfig::default()).unwrap();
    let pi = std::f64::consts::PI;
    let model = LoadModel {
        points: vec![LoadPoint {
            node: (size / 2, size),
            kind: LoadKind::UniformAngle {
                magnitude: 1.0,
                lo: 11.0 * pi / 24.0,
                hi: 13.0 * pi / 24.0,
            },
        }],
    };
    (fem, model)
}

/// Frozen-sample gradient oracle: with the load samples fixed, the gradient
/// estimate is the exact gradient of the sampled objective, verified by
/// central finite differences in every raw-density component.
#[test]
fn frozen_sample_gradient_matches_finite_differences() {
    let (fem, model) = column_fixture(4);
    let filter = build_filter(&fem.mesh, 1.5).unwrap();
    let scaling = scale_factors(&fem.mesh, &filter, 0.4).unwrap();
    let mat = MaterialModel::default();
    let weights = RtoWeights::new(0.618, &model, &fem.mesh, &fem.bc, mat.e0).unwrap();

    // Two frozen load samples.
    let loads: Vec<_> = (0..2)
        .map(|j| model.sample(&fem.mesh, StreamKey::new(42, Purpose::Gradient, 1, j)))
        .collect();

    let mut rnd = TestRand(0xFEED);
    let x: Vec<f64> = (0..fem.mesh.n_elements())
        .map(|_| rnd.in_range(0.15, 0.85))
        .collect();

    let eval = DesignEvaluation::new(&fem, &filter, mat, &x).unwrap();
    let est = estimate_gradient_for_loads(&eval, &filter, &scaling, &weights, &loads).unwrap();

    let h = 1e-6;
    let j_at = |xq: &[f64]| -> f64 {
        let e = DesignEvaluation::new(&fem, &filter, mat, xq).unwrap();
        objective_for_loads(&e, &weights, &loads).unwrap().2
    };
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let fd = (j_at(&xp) - j_at(&xm)) / (2.0 * h);
        let scale = fd.abs().max(est.grad[i].abs()).max(1e-12);
        assert!(
            (fd - est.grad[i]).abs() / scale <= 1e-5,
            "component {i}: fd {fd} vs analytic {}",
            est.grad[i]
        );
    }
}

/// Mean of many independent two-sample objective estimates must sit within
/// three standard errors of a large-sample reference on a frozen design.
#[test]
fn two_sample_objective_is_unbiased() {
    let (fem, model) = column_fixture(6);
    let filter = build_filter(&fem.mesh, 1.5).unwrap();
    let mat = MaterialModel::default();
    let weights = RtoWeights::new(0.618, &model, &fem.mesh, &fem.bc, mat.e0).unwrap();
    let x = vec![0.4; fem.mesh.n_elements()];
    let eval = DesignEvaluation::new(&fem, &filter, mat, &x).unwrap();

    // Large-sample reference.
    let reference = evaluate_design(&eval, &model, &weights, 100_000, 555).unwrap();

    // 1000 independent two-sample estimates.
    let n_rep = 1000;
    let mut js = Vec::with_capacity(n_rep);
    for rep in 0..n_rep {
        let loads: Vec<_> = (0..2)
            .map(|j| {
                model.sample(
                    &fem.mesh,
                    StreamKey::new(900, Purpose::Gradient, rep as u64, j),
                )
            })
            .collect();
        let compliances: Vec<f64> = loads
            .iter()
            .map(|e| eval.solve_sample(e).unwrap().0)
            .collect();
        let (_, _, j) = estimate_objective(&compliances, &weights).unwrap();
        js.push(j);
    }
    let mean = js.iter().sum::<f64>() / n_rep as f64;
    let var = js.iter().map(|j| (j - mean) * (j - mean)).sum::<f64>() / (n_rep as f64 - 1.0);
    let se = (var / n_rep as f64).sqrt();
    assert!(
        (mean - reference.objective).abs() <= 3.0 * se,
        "mean J_2 {mean} vs reference {} (se {se})",
        reference.objective
    );
}

/// The evaluation of a design is an estimator too: two disjoint seed
/// families at the same sample size agree within combined standard errors.
#[test]
fn evaluation_seeds_agree_within_standard_errors() {
    let (fem, model) = column_fixture(6);
    let filter = build_filter(&fem.mesh, 1.5).unwrap();
    let mat = MaterialModel::default();
    let weights = RtoWeights::new(1.0, &model, &fem.mesh, &fem.bc, mat.e0).unwrap();
    let x = vec![0.4; fem.mesh.n_elements()];
    let eval = DesignEvaluation::new(&fem, &filter, mat, &x).unwrap();
    let m = 10_000;
    let a = evaluate_design(&eval, &model, &weights, m, 1).unwrap();
    let b = evaluate_design(&eval, &model, &weights, m, 2).unwrap();
    // sigma/sqrt(m) per estimate; kappa = 1 so J = mu / w.
    let se = (a.sigma / weights.w) / (m as f64).sqrt();
    let combined = (2.0f64).sqrt() * se;
    assert!(
        (a.objective - b.objective).abs() <= 3.0 * combined,
        "J {} vs {} (combined se {combined})",
        a.objective,
        b.objective
    );
    // kappa = 1: J = mu / w.
    assert!((a.objective - a.mean / weights.w).abs() < 1e-12 * a.objective.abs());
}
