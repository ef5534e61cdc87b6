//! Random point-load models, their closed-form means, and the objective
//! weight normalization.

use crate::error::{Error, Result};
use crate::fem::{BoundaryConditions, Mesh};
use crate::rng::StreamKey;
use rand::Rng;
use rand_distr::StandardNormal;

/// Randomness attached to one load point.
#[derive(Debug, Clone, Copy)]
pub enum LoadKind {
    /// Fixed force vector.
    Deterministic { fx: f64, fy: f64 },
    /// Fixed magnitude, direction angle drawn uniformly from [lo, hi)
    /// (radians, measured from the +x axis).
    UniformAngle { magnitude: f64, lo: f64, hi: f64 },
    /// Independent normal components per axis; a zero standard deviation
    /// makes that axis deterministic.
    NormalComponents { mean: [f64; 2], sd: [f64; 2] },
}

/// One load application point, addressed by grid node.
#[derive(Debug, Clone, Copy)]
pub struct LoadPoint {
    pub node: (usize, usize),
    pub kind: LoadKind,
}

/// A set of independent random point loads.
#[derive(Debug, Clone)]
pub struct LoadModel {
    pub points: Vec<LoadPoint>,
}

impl LoadModel {
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Parameter("load model has no load points".into()));
        }
        for p in &self.points {
            let (ix, iy) = p.node;
            if mesh.node_at(ix, iy).is_none() {
                return Err(Error::Parameter(format!(
                    "load node ({ix}, {iy}) is not part of the mesh"
                )));
            }
            if let LoadKind::UniformAngle { lo, hi, .. } = p.kind {
                if !(hi > lo) {
                    return Err(Error::Parameter(
                        "uniform angle range must have hi > lo".into(),
                    ));
                }
            }
            if let LoadKind::NormalComponents { sd, .. } = p.kind {
                if sd[0] < 0.0 || sd[1] < 0.0 {
                    return Err(Error::Parameter(
                        "normal component standard deviations must be >= 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Draws one i.i.d. load realization as (dof, value) pairs.
    pub fn sample(&self, mesh: &Mesh, key: StreamKey) -> Vec<(usize, f64)> {
        let mut rng = key.rng();
        let mut entries = Vec::with_capacity(2 * self.points.len());
        for p in &self.points {
            let (fx, fy) = match p.kind {
                LoadKind::Deterministic { fx, fy } => (fx, fy),
                LoadKind::UniformAngle { magnitude, lo, hi } => {
                    let alpha = lo + (hi - lo) * rng.random::<f64>();
                    (magnitude * alpha.cos(), magnitude * alpha.sin())
                }
                LoadKind::NormalComponents { mean, sd } => {
                    let gx: f64 = rng.sample(StandardNormal);
                    let gy: f64 = rng.sample(StandardNormal);
                    (mean[0] + sd[0] * gx, mean[1] + sd[1] * gy)
                }
            };
            let (dx, dy) = mesh.node_dofs(p.node.0, p.node.1).expect("validated node");
            entries.push((dx, fx));
            entries.push((dy, fy));
        }
        entries
    }

    /// Closed-form mean load as (dof, value) pairs.
    pub fn mean(&self, mesh: &Mesh) -> Vec<(usize, f64)> {
        let mut entries = Vec::with_capacity(2 * self.points.len());
        for p in &self.points {
            let (fx, fy) = match p.kind {
                LoadKind::Deterministic { fx, fy } => (fx, fy),
                LoadKind::UniformAngle { magnitude, lo, hi } => {
                    // E[cos a] and E[sin a] over U(lo, hi).
                    let span = hi - lo;
                    let mean_cos = (hi.sin() - lo.sin()) / span;
                    let mean_sin = (lo.cos() - hi.cos()) / span;
                    (magnitude * mean_cos, magnitude * mean_sin)
                }
                LoadKind::NormalComponents { mean, .. } => (mean[0], mean[1]),
            };
            let (dx, dy) = mesh.node_dofs(p.node.0, p.node.1).expect("validated node");
            entries.push((dx, fx));
            entries.push((dy, fy));
        }
        entries
    }

    /// Dofs that can carry load, in model order (duplicates possible if two
    /// points share a node).
    pub fn load_dofs(&self, mesh: &Mesh) -> Vec<usize> {
        let mut dofs = Vec::with_capacity(2 * self.points.len());
        for p in &self.points {
            let (dx, dy) = mesh.node_dofs(p.node.0, p.node.1).expect("validated node");
            dofs.push(dx);
            dofs.push(dy);
        }
        dofs
    }

    /// True when every load component has zero variance.
    pub fn is_deterministic(&self) -> bool {
        self.points.iter().all(|p| match p.kind {
            LoadKind::Deterministic { .. } => true,
            LoadKind::UniformAngle { lo, hi, .. } => hi == lo,
            LoadKind::NormalComponents { sd, .. } => sd == [0.0, 0.0],
        })
    }
}

/// Mean/variance weighting of the objective.
#[derive(Debug, Clone, Copy)]
pub struct RtoWeights {
    /// Relative weight of the mean; 1 - kappa weights the variance.
    pub kappa: f64,
    /// Normalization w = fbar^T fbar / E0.
    pub w: f64,
}

impl RtoWeights {
    /// Computes the normalization from the closed-form mean load.
    pub fn new(kappa: f64, model: &LoadModel, mesh: &Mesh, bc: &BoundaryConditions, e0: f64) -> Result<RtoWeights> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::Parameter(format!(
                "kappa must lie in [0, 1], got {kappa}"
            )));
        }
        let fbar = bc.load_vector(&model.mean(mesh));
        let w = fbar.iter().map(|v| v * v).sum::<f64>() / e0;
        if !(w > 0.0) {
            return Err(Error::Parameter(
                "mean load is zero; objective normalization undefined".into(),
            ));
        }
        Ok(RtoWeights { kappa, w })
    }

    /// J from mean and variance estimates.
    pub fn objective(&self, mean: f64, var: f64) -> f64 {
        self.kappa / self.w * mean + (1.0 - self.kappa) / (self.w * self.w) * var
    }
}
