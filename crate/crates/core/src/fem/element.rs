//! Bilinear quadrilateral element for plane-stress linear elasticity.
//!
//! Nodes are numbered counter-clockwise starting at the lower-left corner,
//! with two displacement dofs (x, y) per node. Unit thickness.

use crate::error::{Error, Result};

/// 8x8 element stiffness matrix of a square bilinear quad.
#[derive(Debug, Clone)]
pub struct ElementStiffness {
    pub k0: [[f64; 8]; 8],
    pub nu: f64,
}

/// Integrates the plane-stress stiffness of a square element of side
/// `element_size` with 2x2 Gauss quadrature and scales it by `e_scale`.
///
/// For a square plane-stress quad with unit thickness the result is
/// independent of `element_size`; the parameter is kept so callers state
/// their discretization explicitly.
pub fn element_stiffness(e_scale: f64, nu: f64, element_size: f64) -> Result<ElementStiffness> {
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::Parameter(format!(
            "Poisson ratio must lie in [0, 0.5), got {nu}"
        )));
    }
    if !(e_scale > 0.0) || !(element_size > 0.0) {
        return Err(Error::Parameter(
            "modulus scale and element size must be positive".into(),
        ));
    }

    // Plane-stress constitutive matrix for unit modulus.
    let c = 1.0 / (1.0 - nu * nu);
    let d = [
        [c, c * nu, 0.0],
        [c * nu, c, 0.0],
        [0.0, 0.0, c * (1.0 - nu) / 2.0],
    ];

    // Reference coordinates of the four corner nodes, counter-clockwise.
    const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
    const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

    let mut k0 = [[0.0f64; 8]; 8];
    let g = 1.0 / 3.0f64.sqrt();
    let jac = element_size / 2.0; // d x / d xi on a square element
    let det = jac * jac;

    for &gx in &[-g, g] {
        for &gy in &[-g, g] {
            // Shape function gradients in physical coordinates.
            let mut b = [[0.0f64; 8]; 3];
            for a in 0..4 {
                let dn_dxi = 0.25 * XI[a] * (1.0 + ETA[a] * gy);
                let dn_deta = 0.25 * ETA[a] * (1.0 + XI[a] * gx);
                let dn_dx = dn_dxi / jac;
                let dn_dy = dn_deta / jac;
                b[0][2 * a] = dn_dx;
                b[1][2 * a + 1] = dn_dy;
                b[2][2 * a] = dn_dy;
                b[2][2 * a + 1] = dn_dx;
            }
            // k0 += B^T D B * det (unit Gauss weights)
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for r in 0..3 {
                        let mut db = 0.0;
                        for t in 0..3 {
                            db += d[r][t] * b[t][j];
                        }
                        s += b[r][i] * db;
                    }
                    k0[i][j] += s * det;
                }
            }
        }
    }

    for row in k0.iter_mut() {
        for v in row.iter_mut() {
            *v *= e_scale;
        }
    }
    Ok(ElementStiffness { k0, nu })
}

impl ElementStiffness {
    /// Quadratic form u^T k0 u of an element displacement vector.
    pub fn energy(&self, u: &[f64; 8]) -> f64 {
        let mut s = 0.0;
        for i in 0..8 {
            let mut row = 0.0;
            for j in 0..8 {
                row += self.k0[i][j] * u[j];
            }
            s += u[i] * row;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form plane-stress stiffness of a square bilinear quad for the
    /// same node ordering, from the classical analytic integration. Serves
    /// as an oracle independent of the Gauss loop above.
    pub(crate) fn symbolic_k0(nu: f64) -> [[f64; 8]; 8] {
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

    #[test]
    fn matches_symbolic_oracle() {
        let ks = element_stiffness(1.0, 0.3, 1.0).unwrap();
        let oracle = symbolic_k0(0.3);
        for i in 0..8 {
            for j in 0..8 {
                assert!(
                    (ks.k0[i][j] - oracle[i][j]).abs() < 1e-12,
                    "k0[{i}][{j}] = {} vs oracle {}",
                    ks.k0[i][j],
                    oracle[i][j]
                );
            }
        }
    }

    #[test]
    fn symmetric_with_three_rigid_body_modes() {
        let ks = element_stiffness(1.0, 0.3, 1.0).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((ks.k0[i][j] - ks.k0[j][i]).abs() < 1e-14);
            }
        }
        // Translations in x and y and an infinitesimal rotation about the
        // element center must produce zero force.
        let tx = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let ty = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        // Node coords (0,0),(1,0),(1,1),(0,1); rotation u = (-y, x).
        let rot = [0.0, 0.0, 0.0, 1.0, -1.0, 1.0, -1.0, 0.0];
        for mode in [tx, ty, rot] {
            for i in 0..8 {
                let f: f64 = (0..8).map(|j| ks.k0[i][j] * mode[j]).sum();
                assert!(f.abs() < 1e-12, "rigid mode produced force {f}");
            }
        }
        // And nothing else is in the nullspace: rank must be 5. Count
        // pivots of a Gaussian elimination.
        let mut a = ks.k0;
        let mut rank = 0;
        for col in 0..8 {
            let piv = (rank..8).max_by(|&r, &s| {
                a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap()
            });
            let piv = piv.unwrap();
            if a[piv][col].abs() < 1e-10 {
                continue;
            }
            a.swap(rank, piv);
            for r in 0..8 {
                if r != rank {
                    let f = a[r][col] / a[rank][col];
                    for c in 0..8 {
                        a[r][c] -= f * a[rank][c];
                    }
                }
            }
            rank += 1;
        }
        assert_eq!(rank, 5, "expected nullspace dimension 3");
    }

    #[test]
    fn linear_in_modulus_scale() {
        let k1 = element_stiffness(1.0, 0.3, 1.0).unwrap();
        let k2 = element_stiffness(2.0, 0.3, 1.0).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((k2.k0[i][j] - 2.0 * k1.k0[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn size_invariant_for_unit_thickness() {
        let ka = element_stiffness(1.0, 0.3, 1.0).unwrap();
        let kb = element_stiffness(1.0, 0.3, 0.25).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((ka.k0[i][j] - kb.k0[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rejects_invalid_poisson_ratio() {
        assert!(element_stiffness(1.0, 0.5, 1.0).is_err());
        assert!(element_stiffness(1.0, -0.1, 1.0).is_err());
    }
}
