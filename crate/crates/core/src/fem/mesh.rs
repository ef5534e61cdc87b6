//! Structured quadrilateral mesh over a rectangle, with an optional
//! element mask that carves non-rectangular domains out of the bounding
//! box. Only nodes touched by an active element exist; dofs are numbered
//! x-slice by x-slice so the stiffness envelope stays narrow.

use crate::error::{Error, Result};
use std::collections::BTreeSet;

pub const DOFS_PER_NODE: usize = 2;

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub element_size: f64,
    /// Per grid-cell activity, row-major with x fastest: `ex + ey * nx`.
    active_mask: Vec<bool>,
    /// Grid cell -> active element index, usize::MAX when inactive.
    element_index: Vec<usize>,
    /// Active element index -> grid cell.
    element_cell: Vec<(usize, usize)>,
    /// Grid node (ix, iy) -> node index, usize::MAX when unused.
    node_index: Vec<usize>,
    node_count: usize,
    /// Active element -> 8 global dofs (node order counter-clockwise from
    /// the lower-left corner, x dof before y dof).
    element_dofs: Vec<[usize; 8]>,
}

impl Mesh {
    /// Fully active `nx` x `ny` grid.
    pub fn rectangle(nx: usize, ny: usize, element_size: f64) -> Result<Mesh> {
        Mesh::masked(nx, ny, element_size, |_, _| true)
    }

    /// Grid with `active(ex, ey)` deciding which cells carry material.
    pub fn masked(
        nx: usize,
        ny: usize,
        element_size: f64,
        active: impl Fn(usize, usize) -> bool,
    ) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::Parameter("mesh must have at least one element".into()));
        }
        if !(element_size > 0.0) {
            return Err(Error::Parameter("element size must be positive".into()));
        }
        let mut active_mask = vec![false; nx * ny];
        for ey in 0..ny {
            for ex in 0..nx {
                active_mask[ex + ey * nx] = active(ex, ey);
            }
        }
        if !active_mask.iter().any(|&a| a) {
            return Err(Error::Parameter("mesh has no active elements".into()));
        }

        // Number nodes by (ix, iy) lexicographic order, skipping nodes not
        // attached to an active element; this keeps the dof bandwidth at
        // roughly two node columns.
        let nodes_x = nx + 1;
        let nodes_y = ny + 1;
        let mut used = vec![false; nodes_x * nodes_y];
        for ey in 0..ny {
            for ex in 0..nx {
                if active_mask[ex + ey * nx] {
                    for (dx, dy) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                        used[(ex + dx) * nodes_y + (ey + dy)] = true;
                    }
                }
            }
        }
        let mut node_index = vec![usize::MAX; nodes_x * nodes_y];
        let mut node_count = 0;
        for ix in 0..nodes_x {
            for iy in 0..nodes_y {
                if used[ix * nodes_y + iy] {
                    node_index[ix * nodes_y + iy] = node_count;
                    node_count += 1;
                }
            }
        }

        let mut element_index = vec![usize::MAX; nx * ny];
        let mut element_cell = Vec::new();
        let mut element_dofs = Vec::new();
        for ey in 0..ny {
            for ex in 0..nx {
                if !active_mask[ex + ey * nx] {
                    continue;
                }
                element_index[ex + ey * nx] = element_cell.len();
                element_cell.push((ex, ey));
                let corners = [(ex, ey), (ex + 1, ey), (ex + 1, ey + 1), (ex, ey + 1)];
                let mut dofs = [0usize; 8];
                for (a, (ix, iy)) in corners.into_iter().enumerate() {
                    let n = node_index[ix * nodes_y + iy];
                    dofs[2 * a] = 2 * n;
                    dofs[2 * a + 1] = 2 * n + 1;
                }
                element_dofs.push(dofs);
            }
        }

        Ok(Mesh {
            nx,
            ny,
            element_size,
            active_mask,
            element_index,
            element_cell,
            node_index,
            node_count,
            element_dofs,
        })
    }

    /// Number of active elements.
    pub fn n_elements(&self) -> usize {
        self.element_cell.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_count
    }

    pub fn n_dofs(&self) -> usize {
        DOFS_PER_NODE * self.node_count
    }

    /// Volume (area, unit thickness) of every active element.
    pub fn element_volume(&self) -> f64 {
        self.element_size * self.element_size
    }

    pub fn is_active_cell(&self, ex: usize, ey: usize) -> bool {
        self.active_mask[ex + ey * self.nx]
    }

    /// Active element index of a grid cell, if active.
    pub fn element_at(&self, ex: usize, ey: usize) -> Option<usize> {
        match self.element_index[ex + ey * self.nx] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    /// Grid cell of an active element.
    pub fn cell_of(&self, e: usize) -> (usize, usize) {
        self.element_cell[e]
    }

    /// Element center in physical coordinates.
    pub fn element_center(&self, e: usize) -> (f64, f64) {
        let (ex, ey) = self.element_cell[e];
        (
            (ex as f64 + 0.5) * self.element_size,
            (ey as f64 + 0.5) * self.element_size,
        )
    }

    /// Global dofs of an active element.
    pub fn element_dofs(&self, e: usize) -> &[usize; 8] {
        &self.element_dofs[e]
    }

    /// Node index at grid position, if the node exists.
    pub fn node_at(&self, ix: usize, iy: usize) -> Option<usize> {
        if ix > self.nx || iy > self.ny {
            return None;
        }
        match self.node_index[ix * (self.ny + 1) + iy] {
            usize::MAX => None,
            n => Some(n),
        }
    }

    /// Physical coordinates of a node index.
    pub fn node_position(&self, node: usize) -> (f64, f64) {
        // Reverse lookup is only needed in setup/test paths, linear scan is fine.
        for ix in 0..=self.nx {
            for iy in 0..=self.ny {
                if self.node_index[ix * (self.ny + 1) + iy] == node {
                    return (ix as f64 * self.element_size, iy as f64 * self.element_size);
                }
            }
        }
        panic!("node {node} out of range");
    }

    /// x- and y-dof of a grid node; errors if the node does not exist.
    pub fn node_dofs(&self, ix: usize, iy: usize) -> Result<(usize, usize)> {
        self.node_at(ix, iy)
            .map(|n| (2 * n, 2 * n + 1))
            .ok_or_else(|| Error::Parameter(format!("node ({ix}, {iy}) is not part of the mesh")))
    }
}

/// Homogeneous supports plus the dof slots that load models fill per sample.
#[derive(Debug, Clone)]
pub struct BoundaryConditions {
    fixed: BTreeSet<usize>,
    /// Constrained-system numbering: global dof -> free dof (usize::MAX if fixed).
    free_index: Vec<usize>,
    n_free: usize,
}

impl BoundaryConditions {
    pub fn new(mesh: &Mesh, fixed_dofs: impl IntoIterator<Item = usize>) -> Result<Self> {
        let n = mesh.n_dofs();
        let fixed: BTreeSet<usize> = fixed_dofs.into_iter().collect();
        if let Some(&bad) = fixed.iter().find(|&&d| d >= n) {
            return Err(Error::Parameter(format!(
                "fixed dof {bad} out of range (mesh has {n} dofs)"
            )));
        }
        if fixed.len() < 3 {
            return Err(Error::Parameter(
                "at least three fixed dofs are needed to remove rigid-body modes".into(),
            ));
        }
        let mut free_index = vec![usize::MAX; n];
        let mut n_free = 0;
        for d in 0..n {
            if !fixed.contains(&d) {
                free_index[d] = n_free;
                n_free += 1;
            }
        }
        Ok(BoundaryConditions {
            fixed,
            free_index,
            n_free,
        })
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed.contains(&dof)
    }

    /// Free index of a global dof, or None when fixed.
    pub fn free_of(&self, dof: usize) -> Option<usize> {
        match self.free_index[dof] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    /// Scatters a (dof, value) load list into a free-dof vector; entries on
    /// fixed dofs are dropped.
    pub fn load_vector(&self, entries: &[(usize, f64)]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_free];
        for &(dof, v) in entries {
            if let Some(i) = self.free_of(dof) {
                f[i] += v;
            }
        }
        f
    }
}
