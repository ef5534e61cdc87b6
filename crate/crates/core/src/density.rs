//! Density-space machinery: the linear hat filter, SIMP interpolation,
//! scaled design variables on the simplex, symmetry averaging, and the
//! filter-radius continuation schedule.

use crate::error::{Error, Result};
use crate::fem::Mesh;

/// Modified SIMP material interpolation.
#[derive(Debug, Clone, Copy)]
pub struct MaterialModel {
    /// Young's modulus of solid material.
    pub e0: f64,
    /// Ersatz modulus of void.
    pub e_min: f64,
    /// Penalization exponent.
    pub penal: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel {
            e0: 1.0,
            e_min: 1e-4,
            penal: 3.0,
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e0 > self.e_min && self.e_min > 0.0) {
            return Err(Error::Parameter(
                "material must satisfy E0 > E_min > 0".into(),
            ));
        }
        if self.penal < 1.0 {
            return Err(Error::Parameter("penalization must be >= 1".into()));
        }
        Ok(())
    }

    /// E(i) = E_min + xbar^p (E0 - E_min).
    pub fn modulus(&self, x_bar: f64) -> f64 {
        self.e_min + x_bar.powf(self.penal) * (self.e0 - self.e_min)
    }

    /// dE/dxbar = p xbar^(p-1) (E0 - E_min).
    pub fn modulus_derivative(&self, x_bar: f64) -> f64 {
        self.penal * x_bar.powf(self.penal - 1.0) * (self.e0 - self.e_min)
    }
}

/// Per-element moduli for a filtered density field.
pub fn simp_modulus(x_bar: &[f64], mat: &MaterialModel) -> Vec<f64> {
    x_bar.iter().map(|&x| mat.modulus(x)).collect()
}

/// Row-stochastic sparse filter with linear (hat) weights of radius `radius`
/// over element centers. Entry (i, j) is positive iff dist(i, j) < radius.
#[derive(Debug, Clone)]
pub struct FilterMatrix {
    pub radius: f64,
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<f64>,
}

/// Builds the density filter over active elements of the mesh.
pub fn build_filter(mesh: &Mesh, radius: f64) -> Result<FilterMatrix> {
    if !(radius > 0.0) {
        return Err(Error::Parameter("filter radius must be positive".into()));
    }
    let n = mesh.n_elements();
    let h = mesh.element_size;
    let reach = (radius / h).ceil() as isize; // neighbor window in cells
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0usize);
    let mut col_idx: Vec<u32> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();

    for e in 0..n {
        let (ex, ey) = mesh.cell_of(e);
        let (cx, cy) = mesh.element_center(e);
        let start = weights.len();
        for dy in -reach..=reach {
            let ny = ey as isize + dy;
            if ny < 0 || ny >= mesh.ny as isize {
                continue;
            }
            for dx in -reach..=reach {
                let nx = ex as isize + dx;
                if nx < 0 || nx >= mesh.nx as isize {
                    continue;
                }
                let Some(j) = mesh.element_at(nx as usize, ny as usize) else {
                    continue;
                };
                let (jx, jy) = mesh.element_center(j);
                let dist = ((cx - jx).powi(2) + (cy - jy).powi(2)).sqrt();
                let w = radius - dist;
                if w > 0.0 {
                    col_idx.push(j as u32);
                    weights.push(w);
                }
            }
        }
        let sum: f64 = weights[start..].iter().sum();
        for w in &mut weights[start..] {
            *w /= sum;
        }
        row_ptr.push(weights.len());
    }

    Ok(FilterMatrix {
        radius,
        n,
        row_ptr,
        col_idx,
        weights,
    })
}

impl FilterMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// xbar = H x.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = self.row_ptr[i];
                let hi = self.row_ptr[i + 1];
                let mut s = 0.0;
                for k in lo..hi {
                    s += self.weights[k] * x[self.col_idx[k] as usize];
                }
                s
            })
            .collect()
    }

    /// H^T g: pulls a gradient with respect to xbar back to x.
    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.n);
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let gi = g[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k] as usize] += self.weights[k] * gi;
            }
        }
        out
    }

    /// Row weights of element i as (column, weight) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1])
            .map(move |k| (self.col_idx[k] as usize, self.weights[k]))
    }
}

/// Chain rule through the filter: gradient w.r.t. x from gradient w.r.t. xbar.
pub fn chain_gradient(filter: &FilterMatrix, g_xbar: &[f64]) -> Vec<f64> {
    filter.apply_transpose(g_xbar)
}

/// Scaling of the design vector onto the volume simplex.
///
/// The scaled variable is x-tilde(i) = vtilde(i) * x(i) with
/// vtilde = H^T v / (V0 * Vf); the volume constraint becomes
/// sum(x-tilde) = 1 and the box becomes [0, vtilde].
#[derive(Debug, Clone)]
pub struct VariableScaling {
    /// Upper bounds vtilde of the scaled variables.
    pub upper: Vec<f64>,
    /// Total volume of the design domain.
    pub v0: f64,
    /// Prescribed volume fraction.
    pub vf: f64,
}

pub fn scale_factors(mesh: &Mesh, filter: &FilterMatrix, vf: f64) -> Result<VariableScaling> {
    if !(vf > 0.0 && vf < 1.0) {
        return Err(Error::Parameter(format!(
            "volume fraction must lie in (0, 1), got {vf}"
        )));
    }
    let v = mesh.element_volume();
    let v0 = v * mesh.n_elements() as f64;
    let volumes = vec![v; mesh.n_elements()];
    let ht_v = filter.apply_transpose(&volumes);
    let upper = ht_v.iter().map(|&c| c / (v0 * vf)).collect();
    Ok(VariableScaling { upper, v0, vf })
}

impl VariableScaling {
    pub fn n(&self) -> usize {
        self.upper.len()
    }

    /// x -> x-tilde.
    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.upper).map(|(xi, vi)| xi * vi).collect()
    }

    /// x-tilde -> x.
    pub fn back_scale(&self, x_scaled: &[f64]) -> Vec<f64> {
        x_scaled
            .iter()
            .zip(&self.upper)
            .map(|(xi, vi)| xi / vi)
            .collect()
    }

    /// G -> G-tilde = diag(1/vtilde) G.
    pub fn scale_gradient(&self, g: &[f64]) -> Vec<f64> {
        g.iter().zip(&self.upper).map(|(gi, vi)| gi / vi).collect()
    }
}

/// Mirror map between element indices; the identity when symmetry is off.
#[derive(Debug, Clone)]
pub struct SymmetryMap {
    map: Vec<u32>,
}

impl SymmetryMap {
    pub fn identity(n: usize) -> SymmetryMap {
        SymmetryMap {
            map: (0..n as u32).collect(),
        }
    }

    /// Mirror about the vertical axis of the bounding rectangle; requires
    /// the active mask to be mirror-symmetric.
    pub fn vertical_axis(mesh: &Mesh) -> Result<SymmetryMap> {
        let mut map = vec![0u32; mesh.n_elements()];
        for e in 0..mesh.n_elements() {
            let (ex, ey) = mesh.cell_of(e);
            let mx = mesh.nx - 1 - ex;
            let Some(me) = mesh.element_at(mx, ey) else {
                return Err(Error::Parameter(format!(
                    "mesh mask is not mirror-symmetric at cell ({ex}, {ey})"
                )));
            };
            map[e] = me as u32;
        }
        Ok(SymmetryMap { map })
    }

    pub fn mirror_of(&self, e: usize) -> usize {
        self.map[e] as usize
    }

    /// Averages a per-element field with its mirror image. Idempotent.
    pub fn symmetrize(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.map.len());
        field
            .iter()
            .enumerate()
            .map(|(i, &v)| 0.5 * (v + field[self.map[i] as usize]))
            .collect()
    }
}

/// Piecewise-constant filter-radius continuation: holds `r_start` before
/// `start_step`, then steps down linearly in `decrements` equal drops, one
/// every `interval` steps, to `r_end`.
#[derive(Debug, Clone, Copy)]
pub struct RadiusSchedule {
    pub r_start: f64,
    pub r_end: f64,
    pub start_step: u32,
    pub interval: u32,
    pub decrements: u32,
}

impl RadiusSchedule {
    pub fn constant(r: f64) -> RadiusSchedule {
        RadiusSchedule {
            r_start: r,
            r_end: r,
            start_step: u32::MAX,
            interval: 1,
            decrements: 1,
        }
    }

    /// Radius in force at optimization step k (1-based).
    pub fn radius_at(&self, k: u32) -> f64 {
        if k < self.start_step || self.r_start == self.r_end {
            return self.r_start;
        }
        let steps_in = (k - self.start_step) / self.interval.max(1);
        let steps_in = steps_in.min(self.decrements);
        let drop = (self.r_start - self.r_end) / self.decrements as f64;
        self.r_start - drop * steps_in as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mesh3x3() -> Mesh {
        Mesh::rectangle(3, 3, 1.0).unwrap()
    }

    #[test]
    fn small_radius_gives_identity_filter() {
        let mesh = mesh3x3();
        let f = build_filter(&mesh, 1.0).unwrap();
        for i in 0..f.n() {
            let row: Vec<(usize, f64)> = f.row(i).collect();
            assert_eq!(row, vec![(i, 1.0)]);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let mesh = mesh3x3();
        for r in [1.0, 1.5, 2.2, 10.0] {
            let f = build_filter(&mesh, r).unwrap();
            for i in 0..f.n() {
                let s: f64 = f.row(i).map(|(_, w)| w).sum();
                assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s} at R={r}");
            }
        }
    }

    #[test]
    fn center_row_matches_hand_weights() {
        // 3x3 mesh, R = 1.5: the center element sees itself (raw weight
        // 1.5), the four edge neighbors at distance 1 (weight 0.5), and the
        // four diagonal neighbors at distance sqrt(2) (weight 1.5 - sqrt 2).
        let mesh = mesh3x3();
        let f = build_filter(&mesh, 1.5).unwrap();
        let center = mesh.element_at(1, 1).unwrap();
        let w_diag = 1.5 - 2.0f64.sqrt();
        let total = 1.5 + 4.0 * 0.5 + 4.0 * w_diag;
        for (j, w) in f.row(center) {
            let (ex, ey) = mesh.cell_of(j);
            let dist2 = (ex as i32 - 1).pow(2) + (ey as i32 - 1).pow(2);
            let expect = match dist2 {
                0 => 1.5 / total,
                1 => 0.5 / total,
                2 => w_diag / total,
                _ => unreachable!(),
            };
            assert!(
                (w - expect).abs() < 1e-12,
                "weight at ({ex},{ey}) = {w}, expected {expect}"
            );
        }
        assert_eq!(f.row(center).count(), 9);
    }

    #[test]
    fn transpose_matches_dense_multiply() {
        let mesh = mesh3x3();
        let f = build_filter(&mesh, 1.7).unwrap();
        let n = f.n();
        let g: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0).collect();
        // Dense H from rows, then dense H^T g.
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for (j, w) in f.row(i) {
                dense[i][j] = w;
            }
        }
        let expect: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| dense[i][j] * g[i]).sum())
            .collect();
        let got = chain_gradient(&f, &g);
        for i in 0..n {
            assert!((got[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn simp_endpoints_and_midpoint() {
        let mat = MaterialModel::default();
        assert!((mat.modulus(1.0) - 1.0).abs() < 1e-15);
        assert!((mat.modulus(0.0) - 1e-4).abs() < 1e-18);
        let expect = 1e-4 + 0.125 * (1.0 - 1e-4);
        assert!((mat.modulus(0.5) - expect).abs() < 1e-15);
    }

    #[test]
    fn uniform_start_is_feasible_and_round_trips() {
        let mesh = mesh3x3();
        let f = build_filter(&mesh, 1.5).unwrap();
        let vf = 0.4;
        let s = scale_factors(&mesh, &f, vf).unwrap();
        let x = vec![vf; s.n()];
        let xs = s.scale(&x);
        let total: f64 = xs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let back = s.back_scale(&xs);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
        // Sum of scaled upper bounds is 1/Vf.
        let su: f64 = s.upper.iter().sum();
        assert!((su - 1.0 / vf).abs() < 1e-12);
    }

    #[test]
    fn scaled_upper_bound_identity_on_masked_mesh() {
        // Hook-like mask: L-shaped domain.
        let mesh = Mesh::masked(4, 4, 0.5, |ex, ey| ey < 2 || ex < 2).unwrap();
        let f = build_filter(&mesh, 0.8).unwrap();
        let s = scale_factors(&mesh, &f, 0.3).unwrap();
        let su: f64 = s.upper.iter().sum();
        assert!((su - 1.0 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn gradient_scaling_is_componentwise_inverse() {
        let mesh = mesh3x3();
        let f = build_filter(&mesh, 1.5).unwrap();
        let s = scale_factors(&mesh, &f, 0.5).unwrap();
        let g: Vec<f64> = (0..s.n()).map(|i| (i as f64 - 4.0) * 0.3).collect();
        let gs = s.scale_gradient(&g);
        for i in 0..s.n() {
            assert!((gs[i] * s.upper[i] - g[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn filter_conserves_scaled_volume() {
        // v^T (H x) equals (H^T v)^T x for arbitrary x.
        let mesh = Mesh::masked(5, 4, 0.5, |ex, _| ex != 2).unwrap();
        let f = build_filter(&mesh, 1.1).unwrap();
        let n = f.n();
        let x: Vec<f64> = (0..n).map(|i| ((i * 13 + 5) % 17) as f64 / 17.0).collect();
        let v = mesh.element_volume();
        let xbar = f.apply(&x);
        let lhs: f64 = xbar.iter().map(|xb| v * xb).sum();
        let volumes = vec![v; n];
        let htv = f.apply_transpose(&volumes);
        let rhs: f64 = htv.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn symmetrize_basics() {
        let m = SymmetryMap::vertical_axis(&Mesh::rectangle(2, 1, 1.0).unwrap()).unwrap();
        assert_eq!(m.symmetrize(&[2.0, 4.0]), vec![3.0, 3.0]);
        let sym = m.symmetrize(&[1.0, 1.0]);
        assert_eq!(sym, vec![1.0, 1.0]);
    }

    #[test]
    fn symmetrize_commutes_with_filter_on_symmetric_mesh() {
        let mesh = Mesh::rectangle(4, 3, 1.0).unwrap();
        let f = build_filter(&mesh, 1.8).unwrap();
        let m = SymmetryMap::vertical_axis(&mesh).unwrap();
        let x: Vec<f64> = (0..f.n()).map(|i| ((i * 29 + 1) % 23) as f64 / 23.0).collect();
        let a = m.symmetrize(&f.apply(&x));
        let b = f.apply(&m.symmetrize(&x));
        for i in 0..f.n() {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn radius_schedule_staircase() {
        // The simple-column continuation: 3.0 down to 1.2 in 6 drops of 0.3
        // every 30 steps from step 300.
        let s = RadiusSchedule {
            r_start: 3.0,
            r_end: 1.2,
            start_step: 300,
            interval: 30,
            decrements: 6,
        };
        assert_eq!(s.radius_at(1), 3.0);
        assert_eq!(s.radius_at(299), 3.0);
        assert_eq!(s.radius_at(300), 3.0);
        assert!((s.radius_at(330) - 2.7).abs() < 1e-12);
        assert!((s.radius_at(459) - 1.5).abs() < 1e-12);
        assert!((s.radius_at(480) - 1.2).abs() < 1e-12);
        assert!((s.radius_at(10_000) - 1.2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetrize_is_idempotent(vals in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let mesh = Mesh::rectangle(4, 3, 1.0).unwrap();
            let m = SymmetryMap::vertical_axis(&mesh).unwrap();
            let once = m.symmetrize(&vals);
            let twice = m.symmetrize(&once);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn scale_round_trip(vals in proptest::collection::vec(0.0f64..1.0, 9), vf in 0.1f64..0.9) {
            let mesh = Mesh::rectangle(3, 3, 1.0).unwrap();
            let f = build_filter(&mesh, 1.5).unwrap();
            let s = scale_factors(&mesh, &f, vf).unwrap();
            let back = s.back_scale(&s.scale(&vals));
            for (a, b) in back.iter().zip(&vals) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
