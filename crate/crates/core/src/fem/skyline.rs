//! Symmetric envelope ("skyline") storage with an in-place LDL^T
//! factorization. Column j stores rows `first_row[j]..=j` contiguously,
//! which makes both the factorization inner loops and the triangular
//! solves run over contiguous slices.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    n: usize,
    first_row: Vec<usize>,
    col_ptr: Vec<usize>,
    values: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    let mut acc = [0.0f64; 8];
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3]))
        + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

impl SkylineMatrix {
    /// Allocates a zeroed matrix with the given column envelope.
    pub fn from_envelope(first_row: Vec<usize>) -> SkylineMatrix {
        let n = first_row.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut total = 0usize;
        for (j, &fr) in first_row.iter().enumerate() {
            debug_assert!(fr <= j);
            total += j - fr + 1;
            col_ptr.push(total);
        }
        SkylineMatrix {
            n,
            first_row,
            col_ptr,
            values: vec![0.0; total],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reset(&mut self) {
        self.values.fill(0.0);
    }

    /// Adds `v` at (row, col) of the upper triangle; row must lie inside the
    /// column envelope.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        debug_assert!(row <= col && row >= self.first_row[col]);
        let idx = self.col_ptr[col] + (row - self.first_row[col]);
        self.values[idx] += v;
    }

    /// Entry (row, col); zero outside the envelope. Test/diagnostic use.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        if r < self.first_row[c] {
            return 0.0;
        }
        self.values[self.col_ptr[c] + (r - self.first_row[c])]
    }

    /// y = K x using the symmetric envelope.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        y.fill(0.0);
        for j in 0..self.n {
            let fr = self.first_row[j];
            let col = &self.values[self.col_ptr[j]..self.col_ptr[j + 1]];
            let (off_diag, diag) = col.split_at(col.len() - 1);
            y[j] += diag[0] * x[j] + dot(off_diag, &x[fr..j]);
            axpy(&mut y[fr..j], x[j], off_diag);
        }
    }

    /// In-place LDL^T. Fails on a non-positive pivot (singular or indefinite
    /// constrained system).
    pub fn factorize(mut self) -> Result<SkylineFactor> {
        let n = self.n;
        let mut diag = vec![0.0f64; n];
        for j in 0..n {
            let fr_j = self.first_row[j];
            let (done, current) = self.values.split_at_mut(self.col_ptr[j]);
            let col_j = &mut current[..(j - fr_j + 1)];

            // Transform off-diagonal entries: y_i = K_ij - <L_i., y>.
            for i in fr_j + 1..j {
                let fr_i = self.first_row[i];
                let lo = fr_i.max(fr_j);
                let row_i = &done[self.col_ptr[i] + (lo - fr_i)..self.col_ptr[i] + (i - fr_i)];
                let (head, tail) = col_j.split_at_mut(i - fr_j);
                tail[0] -= dot(row_i, &head[lo - fr_j..]);
            }

            // Pivot and scaling of the column to L entries.
            let mut d = col_j[j - fr_j];
            for k in fr_j..j {
                let y = col_j[k - fr_j];
                let l = y / diag[k];
                d -= l * y;
                col_j[k - fr_j] = l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Assembly(format!(
                    "non-positive pivot {d:.3e} at dof {j}: constrained system is singular \
                     (check supports)"
                )));
            }
            diag[j] = d;
            col_j[j - fr_j] = d;
        }
        Ok(SkylineFactor {
            n,
            first_row: self.first_row,
            col_ptr: self.col_ptr,
            values: self.values,
            diag,
        })
    }
}

/// LDL^T factors in the same envelope layout.
#[derive(Debug, Clone)]
pub struct SkylineFactor {
    n: usize,
    first_row: Vec<usize>,
    col_ptr: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

impl SkylineFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves K u = f.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        let mut u = f.to_vec();
        // Forward: L z = f (row j of L is stored as column j).
        for j in 0..self.n {
            let fr = self.first_row[j];
            let row = &self.values[self.col_ptr[j]..self.col_ptr[j + 1] - 1];
            u[j] -= dot(row, &u[fr..j]);
        }
        // Diagonal.
        for j in 0..self.n {
            u[j] /= self.diag[j];
        }
        // Backward: L^T u = w.
        for j in (0..self.n).rev() {
            let fr = self.first_row[j];
            let uj = u[j];
            let row = &self.values[self.col_ptr[j]..self.col_ptr[j + 1] - 1];
            axpy(&mut u[fr..j], -uj, row);
        }
        u
    }
}
