//! Structured fine/coarse meshes on the unit square and the coarse
//! neighborhood bookkeeping used by the multiscale basis construction.
//!
//! Nodes and cells are numbered lexicographically with x running fastest.
//! Coarse neighborhoods are the 2H x 2H patches of the four coarse elements
//! sharing an interior coarse node.

use crate::error::{Error, Result};

/// Structured quadrilateral mesh of `nx * ny` cells over (0,1)^2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FineMesh {
    pub nx: usize,
    pub ny: usize,
}

impl FineMesh {
    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn node_id(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_ij(&self, id: usize) -> (usize, usize) {
        (id % (self.nx + 1), id / (self.nx + 1))
    }

    pub fn node_xy(&self, id: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(id);
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    #[inline]
    pub fn cell_id(&self, ci: usize, cj: usize) -> usize {
        debug_assert!(ci < self.nx && cj < self.ny);
        cj * self.nx + ci
    }

    #[inline]
    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    /// Corner node ids of a cell, counterclockwise from the lower-left.
    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        let (ci, cj) = self.cell_ij(cell);
        [
            self.node_id(ci, cj),
            self.node_id(ci + 1, cj),
            self.node_id(ci + 1, cj + 1),
            self.node_id(ci, cj + 1),
        ]
    }

    pub fn is_boundary_node(&self, id: usize) -> bool {
        let (i, j) = self.node_ij(id);
        i == 0 || i == self.nx || j == 0 || j == self.ny
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&id| self.is_boundary_node(id))
            .collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&id| !self.is_boundary_node(id))
            .collect()
    }
}

pub fn build_fine_mesh(nx: usize, ny: usize) -> Result<FineMesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::config(format!(
            "fine mesh must have at least 2 cells per axis, got {nx} x {ny}"
        )));
    }
    Ok(FineMesh { nx, ny })
}

/// Axis-aligned rectangle of fine cells, `[i0, i1) x [j0, j1)` in fine-cell
/// indices. Its nodes are `[i0, i1] x [j0, j1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl Patch {
    pub fn n_cells(&self) -> usize {
        (self.i1 - self.i0) * (self.j1 - self.j0)
    }

    pub fn n_nodes(&self) -> usize {
        (self.i1 - self.i0 + 1) * (self.j1 - self.j0 + 1)
    }

    /// Global fine-cell ids covered by the patch, lexicographic.
    pub fn cells(&self, fine: &FineMesh) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_cells());
        for cj in self.j0..self.j1 {
            for ci in self.i0..self.i1 {
                out.push(fine.cell_id(ci, cj));
            }
        }
        out
    }

    /// Global fine-node ids of the patch, lexicographic (matches the local
    /// numbering used by patch assembly).
    pub fn nodes(&self, fine: &FineMesh) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_nodes());
        for j in self.j0..=self.j1 {
            for i in self.i0..=self.i1 {
                out.push(fine.node_id(i, j));
            }
        }
        out
    }

    /// Local index of a fine node (i, j) inside the patch.
    #[inline]
    pub fn local_node(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= self.i0 && i <= self.i1 && j >= self.j0 && j <= self.j1);
        (j - self.j0) * (self.i1 - self.i0 + 1) + (i - self.i0)
    }

    /// Whether fine node (i, j) lies on the patch perimeter.
    #[inline]
    pub fn on_boundary(&self, i: usize, j: usize) -> bool {
        i == self.i0 || i == self.i1 || j == self.j0 || j == self.j1
    }

    pub fn contains_node(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i <= self.i1 && j >= self.j0 && j <= self.j1
    }
}

/// Coarse partition of the fine mesh. Each coarse element is an `mx * my`
/// block of fine cells.
#[derive(Debug, Clone)]
pub struct CoarseMesh {
    pub fine: FineMesh,
    /// Coarse cell counts per axis.
    pub nx_c: usize,
    pub ny_c: usize,
    /// Fine cells per coarse cell, per axis.
    pub mx: usize,
    pub my: usize,
}

impl CoarseMesh {
    /// Coarse mesh size used in the spectral weight; max over axes for
    /// anisotropic grids.
    pub fn coarse_h(&self) -> f64 {
        (1.0 / self.nx_c as f64).max(1.0 / self.ny_c as f64)
    }

    pub fn n_elems(&self) -> usize {
        self.nx_c * self.ny_c
    }

    /// Number of interior coarse nodes, i.e. of coarse neighborhoods.
    pub fn n_interior_nodes(&self) -> usize {
        (self.nx_c - 1) * (self.ny_c - 1)
    }

    pub fn n_coarse_nodes(&self) -> usize {
        (self.nx_c + 1) * (self.ny_c + 1)
    }

    /// Coarse grid indices (cI, cJ) of interior node `k`, with cI in 1..nx_c.
    pub fn interior_node_ij(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.n_interior_nodes());
        (k % (self.nx_c - 1) + 1, k / (self.nx_c - 1) + 1)
    }

    pub fn interior_node_index(&self, ci: usize, cj: usize) -> usize {
        debug_assert!(ci >= 1 && ci < self.nx_c && cj >= 1 && cj < self.ny_c);
        (cj - 1) * (self.nx_c - 1) + (ci - 1)
    }

    /// Fine-node indices of coarse node (cI, cJ).
    pub fn coarse_node_fine_ij(&self, ci: usize, cj: usize) -> (usize, usize) {
        (ci * self.mx, cj * self.my)
    }

    /// Patch of fine cells forming coarse element (eI, eJ).
    pub fn elem_patch(&self, ei: usize, ej: usize) -> Patch {
        debug_assert!(ei < self.nx_c && ej < self.ny_c);
        Patch {
            i0: ei * self.mx,
            i1: (ei + 1) * self.mx,
            j0: ej * self.my,
            j1: (ej + 1) * self.my,
        }
    }

    /// Coarse element (eI, eJ) containing fine cell `cell`.
    pub fn elem_of_cell(&self, cell: usize) -> (usize, usize) {
        let (ci, cj) = self.fine.cell_ij(cell);
        (ci / self.mx, cj / self.my)
    }

    /// Neighborhood D_i of interior coarse node `k`: the union of the four
    /// coarse elements having that node as a corner.
    pub fn neighborhood(&self, k: usize) -> Patch {
        let (ci, cj) = self.interior_node_ij(k);
        Patch {
            i0: (ci - 1) * self.mx,
            i1: (ci + 1) * self.mx,
            j0: (cj - 1) * self.my,
            j1: (cj + 1) * self.my,
        }
    }

    /// Support patch of the partition-of-unity function of coarse node
    /// (cI, cJ): union of the adjacent coarse elements (1, 2 or 4 of them).
    pub fn coarse_node_patch(&self, ci: usize, cj: usize) -> Patch {
        Patch {
            i0: ci.saturating_sub(1) * self.mx,
            i1: (ci + 1).min(self.nx_c) * self.mx,
            j0: cj.saturating_sub(1) * self.my,
            j1: (cj + 1).min(self.ny_c) * self.my,
        }
    }

    /// Whether neighborhoods `a` and `b` share any fine cell. Patches of
    /// coarse nodes overlap iff the nodes are within Chebyshev distance 1.
    pub fn neighborhoods_overlap(&self, a: usize, b: usize) -> bool {
        let (ai, aj) = self.interior_node_ij(a);
        let (bi, bj) = self.interior_node_ij(b);
        ai.abs_diff(bi) <= 1 && aj.abs_diff(bj) <= 1
    }
}

pub fn build_coarse_mesh(fine: &FineMesh, nx_c: usize, ny_c: usize) -> Result<CoarseMesh> {
    if nx_c < 2 || ny_c < 2 {
        return Err(Error::config(format!(
            "coarse mesh must have at least 2 cells per axis, got {nx_c} x {ny_c}"
        )));
    }
    if fine.nx % nx_c != 0 || fine.ny % ny_c != 0 {
        return Err(Error::config(format!(
            "coarse cells must evenly divide the fine mesh: fine {} x {}, coarse {} x {}",
            fine.nx, fine.ny, nx_c, ny_c
        )));
    }
    Ok(CoarseMesh {
        fine: fine.clone(),
        nx_c,
        ny_c,
        mx: fine.nx / nx_c,
        my: fine.ny / ny_c,
    })
}

/// Per-neighborhood fine-node bookkeeping: the patch node list in local
/// order, split into interior nodes and perimeter nodes J_h(D_i).
#[derive(Debug, Clone)]
pub struct NeighborhoodDofs {
    pub patch: Patch,
    /// Global node ids, lexicographic within the patch (sorted ascending).
    pub nodes: Vec<usize>,
    /// Local indices of nodes on the patch perimeter.
    pub boundary_local: Vec<usize>,
    /// Local indices of nodes strictly inside the patch.
    pub interior_local: Vec<usize>,
}

impl NeighborhoodDofs {
    /// Cardinality L_i of J_h(D_i).
    pub fn n_boundary(&self) -> usize {
        self.boundary_local.len()
    }

    /// Local index of a global node id, if it lies in the patch.
    pub fn local_of_global(&self, global: usize) -> Option<usize> {
        self.nodes.binary_search(&global).ok()
    }
}

#[derive(Debug, Clone)]
pub struct NeighborhoodIndexing {
    pub per_nbhd: Vec<NeighborhoodDofs>,
}

pub fn neighborhood_indexing(coarse: &CoarseMesh) -> NeighborhoodIndexing {
    let fine = &coarse.fine;
    let per_nbhd = (0..coarse.n_interior_nodes())
        .map(|k| {
            let patch = coarse.neighborhood(k);
            let nodes = patch.nodes(fine);
            let mut boundary_local = Vec::new();
            let mut interior_local = Vec::new();
            for (local, &g) in nodes.iter().enumerate() {
                let (i, j) = fine.node_ij(g);
                if patch.on_boundary(i, j) {
                    boundary_local.push(local);
                } else {
                    interior_local.push(local);
                }
            }
            NeighborhoodDofs {
                patch,
                nodes,
                boundary_local,
                interior_local,
            }
        })
        .collect();
    NeighborhoodIndexing { per_nbhd }
}
