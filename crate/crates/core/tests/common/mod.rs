//! Dense reference implementations shared by the oracle test suites. These
//! stay independent of the library's sparse assembly and solve paths.

pub mod prox_ref;

use rto_core::fem::{BoundaryConditions, ElementStiffness, Mesh};

/// Dense assembly of the constrained stiffness: scatter E_e * k0 over all
/// dofs, then restrict rows/columns to the free set.
pub fn dense_constrained_stiffness(
    mesh: &Mesh,
    bc: &BoundaryConditions,
    k0: &ElementStiffness,
    moduli: &[f64],
) -> Vec<Vec<f64>> {
    let n_all = mesh.n_dofs();
    let mut full = vec![vec![0.0f64; n_all]; n_all];
    for e in 0..mesh.n_elements() {
        let dofs = mesh.element_dofs(e);
        for a in 0..8 {
            for b in 0..8 {
                full[dofs[a]][dofs[b]] += moduli[e] * k0.k0[a][b];
            }
        }
    }
    let free: Vec<usize> = (0..n_all).filter(|&d| !bc.is_fixed(d)).collect();
    free.iter()
        .map(|&r| free.iter().map(|&c| full[r][c]).collect())
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())
            .unwrap();
        m.swap(c, p);
        x.swap(c, p);
        assert!(m[c][c].abs() > 1e-300, "singular dense system");
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        for k in c + 1..n {
            x[c] -= m[c][k] * x[k];
        }
        x[c] /= m[c][c];
    }
    x
}

/// Closed-form plane-stress stiffness of a square bilinear quad (unit
/// modulus, counter-clockwise node numbering from the lower-left corner),
/// from the classical analytic integration.
pub fn symbolic_k0(nu: f64) -> [[f64; 8]; 8] {
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    let idx: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let c = 1.0 / (1.0 - nu * nu);
    let mut m = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            m[i][j] = c * k[idx[i][j]];
        }
    }
    m
}

/// Deterministic pseudo-random sequence for test data.
pub struct TestRand(pub u64);

impl TestRand {
    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
