//! Compressed sparse row storage (full symmetric pattern) and a
//! Jacobi-preconditioned conjugate gradient solver, used instead of the
//! direct factorization on large meshes.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrPattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
}

impl CsrPattern {
    /// Builds the pattern of a symmetric matrix from per-row column lists
    /// (each list sorted, duplicates removed by the caller supplying sorted
    /// unique entries).
    pub fn from_rows(rows: Vec<Vec<u32>>) -> CsrPattern {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0usize);
        let mut total = 0;
        for r in &rows {
            total += r.len();
            row_ptr.push(total);
        }
        let mut col_idx = Vec::with_capacity(total);
        for r in rows {
            col_idx.extend(r);
        }
        CsrPattern { n, row_ptr, col_idx }
    }

    /// Index of (row, col) in the value array.
    pub fn slot(&self, row: usize, col: usize) -> usize {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        let local = self.col_idx[lo..hi]
            .binary_search(&(col as u32))
            .expect("entry outside sparsity pattern");
        lo + local
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix<'a> {
    pub pattern: &'a CsrPattern,
    pub values: Vec<f64>,
}

impl CsrMatrix<'_> {
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let p = self.pattern;
        for r in 0..p.n {
            let lo = p.row_ptr[r];
            let hi = p.row_ptr[r + 1];
            let mut s = 0.0;
            for k in lo..hi {
                s += self.values[k] * x[p.col_idx[k] as usize];
            }
            y[r] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let p = self.pattern;
        (0..p.n).map(|r| self.values[p.slot(r, r)]).collect()
    }
}

pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned CG for SPD systems. Converges when the true
/// relative residual ||f - K u|| / ||f|| drops below `tol`.
pub fn pcg(
    mat: &CsrMatrix,
    f: &[f64],
    tol: f64,
    max_iter: usize,
    u: &mut [f64],
) -> Result<CgOutcome> {
    let n = f.len();
    let f_norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.fill(0.0);
    if f_norm == 0.0 {
        return Ok(CgOutcome {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = mat
        .diagonal()
        .iter()
        .map(|&d| {
            if d > 0.0 {
                1.0 / d
            } else {
                0.0 // zero rows cannot appear for assembled SPD systems
            }
        })
        .collect();

    let mut r = f.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];

    for it in 1..=max_iter {
        mat.mul_vec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Solver {
                detail: format!("CG curvature {pap:.3e} not positive at iteration {it}"),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm / f_norm <= tol {
            return Ok(CgOutcome {
                iterations: it,
                rel_residual: r_norm / f_norm,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::Solver {
        detail: format!(
            "CG did not reach tolerance {tol:.1e} within {max_iter} iterations \
             (relative residual {:.3e})",
            r_norm / f_norm
        ),
    })
}
