//! Finite-element discretization: bilinear quads, sparse assembly over the
//! free dofs (fixed dofs eliminated), direct and iterative solves, and the
//! compliance kernels.

pub mod csr;
pub mod element;
pub mod mesh;
pub mod skyline;

pub use element::{element_stiffness, ElementStiffness};
pub use mesh::{BoundaryConditions, Mesh, DOFS_PER_NODE};

use crate::error::{Error, Result};
use csr::{CgOutcome, CsrMatrix, CsrPattern};
use skyline::{SkylineFactor, SkylineMatrix};

/// How the constrained system is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Sparse LDL^T on the envelope; the default for meshes up to ~40k
    /// elements.
    Direct,
    /// Jacobi-preconditioned conjugate gradient.
    Cg,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Required relative residual of every solve.
    pub tol: f64,
    /// CG iteration cap; `None` picks 10 * n_dofs.
    pub max_iter: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Direct,
            tol: 1e-8,
            max_iter: None,
        }
    }
}

/// Element count above which the registry switches to CG by default.
pub const DIRECT_SOLVER_ELEMENT_LIMIT: usize = 40_000;

/// Mesh + boundary conditions + element stiffness, with the sparsity
/// metadata required by the configured solver precomputed. Immutable over
/// an optimization run; every design only changes element moduli.
pub struct FemContext {
    pub mesh: Mesh,
    pub bc: BoundaryConditions,
    pub k0: ElementStiffness,
    pub solver: SolverConfig,
    /// Per element, free-dof indices (usize::MAX where fixed).
    free_dofs: Vec<[usize; 8]>,
    /// Column envelope for the direct path.
    envelope: Option<Vec<usize>>,
    /// Sparsity pattern and per-element value slots for the CG path
    /// (u32::MAX marks pairs touching fixed dofs).
    csr: Option<(CsrPattern, Vec<[u32; 64]>)>,
}

impl FemContext {
    pub fn new(mesh: Mesh, bc: BoundaryConditions, nu: f64, solver: SolverConfig) -> Result<Self> {
        let k0 = element_stiffness(1.0, nu, mesh.element_size)?;
        let free_dofs: Vec<[usize; 8]> = (0..mesh.n_elements())
            .map(|e| {
                let mut out = [usize::MAX; 8];
                for (a, &dof) in mesh.element_dofs(e).iter().enumerate() {
                    if let Some(i) = bc.free_of(dof) {
                        out[a] = i;
                    }
                }
                out
            })
            .collect();

        let mut ctx = FemContext {
            mesh,
            bc,
            k0,
            solver,
            free_dofs,
            envelope: None,
            csr: None,
        };
        match solver.kind {
            SolverKind::Direct => ctx.envelope = Some(ctx.build_envelope()),
            SolverKind::Cg => ctx.csr = Some(ctx.build_csr()),
        }
        Ok(ctx)
    }

    fn build_envelope(&self) -> Vec<usize> {
        let n = self.bc.n_free();
        let mut first = (0..n).collect::<Vec<usize>>();
        for dofs in &self.free_dofs {
            let lo = dofs.iter().copied().filter(|&d| d != usize::MAX).min();
            let Some(lo) = lo else { continue };
            for &d in dofs {
                if d != usize::MAX && lo < first[d] {
                    first[d] = lo;
                }
            }
        }
        first
    }

    fn build_csr(&self) -> (CsrPattern, Vec<[u32; 64]>) {
        let n = self.bc.n_free();
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        for dofs in &self.free_dofs {
            for &i in dofs {
                if i == usize::MAX {
                    continue;
                }
                for &j in dofs {
                    if j != usize::MAX {
                        rows[i].push(j as u32);
                    }
                }
            }
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
        }
        let pattern = CsrPattern::from_rows(rows);
        let slots: Vec<[u32; 64]> = self
            .free_dofs
            .iter()
            .map(|dofs| {
                let mut s = [u32::MAX; 64];
                for a in 0..8 {
                    for b in 0..8 {
                        if dofs[a] != usize::MAX && dofs[b] != usize::MAX {
                            s[8 * a + b] = pattern.slot(dofs[a], dofs[b]) as u32;
                        }
                    }
                }
                s
            })
            .collect();
        (pattern, slots)
    }

    /// Assembles and prepares the constrained stiffness for the given
    /// per-element moduli.
    pub fn assemble(&self, moduli: &[f64]) -> Result<DesignSolver<'_>> {
        if moduli.len() != self.mesh.n_elements() {
            return Err(Error::Shape(format!(
                "modulus vector has {} entries, mesh has {} elements",
                moduli.len(),
                self.mesh.n_elements()
            )));
        }
        if let Some(&bad) = moduli.iter().find(|&&e| !(e > 0.0)) {
            return Err(Error::Assembly(format!(
                "non-positive element modulus {bad}"
            )));
        }
        let backend = match self.solver.kind {
            SolverKind::Direct => {
                let envelope = self.envelope.as_ref().expect("direct context");
                let mut k = SkylineMatrix::from_envelope(envelope.clone());
                for (dofs, &ee) in self.free_dofs.iter().zip(moduli) {
                    for a in 0..8 {
                        let i = dofs[a];
                        if i == usize::MAX {
                            continue;
                        }
                        for b in 0..8 {
                            let j = dofs[b];
                            if j != usize::MAX && i <= j {
                                k.add(i, j, ee * self.k0.k0[a][b]);
                            }
                        }
                    }
                }
                Backend::Direct(k.factorize()?)
            }
            SolverKind::Cg => {
                let (pattern, slots) = self.csr.as_ref().expect("cg context");
                let mut values = vec![0.0; pattern.col_idx.len()];
                for (slot_row, &ee) in slots.iter().zip(moduli) {
                    for a in 0..8 {
                        for b in 0..8 {
                            let s = slot_row[8 * a + b];
                            if s != u32::MAX {
                                values[s as usize] += ee * self.k0.k0[a][b];
                            }
                        }
                    }
                }
                Backend::Iterative(values)
            }
        };
        Ok(DesignSolver {
            ctx: self,
            moduli: moduli.to_vec(),
            backend,
        })
    }

    /// y = K(moduli) x computed element by element, without an assembled
    /// matrix. Used for residual verification.
    pub fn mul_stiffness(&self, moduli: &[f64], x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (dofs, &ee) in self.free_dofs.iter().zip(moduli) {
            let mut local = [0.0f64; 8];
            for (a, &d) in dofs.iter().enumerate() {
                if d != usize::MAX {
                    local[a] = x[d];
                }
            }
            for a in 0..8 {
                let d = dofs[a];
                if d == usize::MAX {
                    continue;
                }
                let mut s = 0.0;
                for b in 0..8 {
                    s += self.k0.k0[a][b] * local[b];
                }
                y[d] += ee * s;
            }
        }
    }

    /// Per-element quadratic forms u_e^T k0 u_e for a free-dof displacement
    /// vector (fixed dofs are zero).
    pub fn element_energies(&self, u: &[f64]) -> Vec<f64> {
        self.free_dofs
            .iter()
            .map(|dofs| {
                let mut local = [0.0f64; 8];
                for (a, &d) in dofs.iter().enumerate() {
                    if d != usize::MAX {
                        local[a] = u[d];
                    }
                }
                self.k0.energy(&local)
            })
            .collect()
    }
}

enum Backend {
    Direct(SkylineFactor),
    Iterative(Vec<f64>),
}

/// Assembled (and, for the direct path, factorized) stiffness of one
/// design; solves any number of right-hand sides.
pub struct DesignSolver<'a> {
    ctx: &'a FemContext,
    moduli: Vec<f64>,
    backend: Backend,
}

impl DesignSolver<'_> {
    pub fn moduli(&self) -> &[f64] {
        &self.moduli
    }

    /// Solves K u = f for a free-dof load vector and verifies the relative
    /// residual against the configured tolerance.
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.ctx.bc.n_free();
        assert_eq!(f.len(), n);
        let f_norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if f_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let tol = self.ctx.solver.tol;
        let u = match &self.backend {
            Backend::Direct(factor) => factor.solve(f),
            Backend::Iterative(values) => {
                let (pattern, _) = self.ctx.csr.as_ref().expect("cg context");
                let mat = CsrMatrix {
                    pattern,
                    values: values.clone(),
                };
                let max_iter = self.ctx.solver.max_iter.unwrap_or(10 * n.max(100));
                let mut u = vec![0.0; n];
                let CgOutcome { .. } = csr::pcg(&mat, f, tol, max_iter, &mut u)?;
                u
            }
        };
        // True-residual check.
        let mut ku = vec![0.0; n];
        self.ctx.mul_stiffness(&self.moduli, &u, &mut ku);
        let r_norm = ku
            .iter()
            .zip(f)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        let rel = r_norm / f_norm;
        if rel > tol {
            return Err(Error::Solver {
                detail: format!("relative residual {rel:.3e} exceeds tolerance {tol:.1e}"),
            });
        }
        Ok(u)
    }
}

/// Compliance f^T u.
pub fn compliance(f: &[f64], u: &[f64]) -> f64 {
    assert_eq!(f.len(), u.len());
    f.iter().zip(u).map(|(a, b)| a * b).sum()
}
