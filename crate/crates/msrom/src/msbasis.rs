//! Multiscale basis construction: snapshot spaces from local harmonic
//! extensions, partition of unity functions, the weighted local spectral
//! problem, and assembly of the global offline space.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{
    self, assemble_patch_stiffness, assemble_patch_weighted_mass, BandedCholesky, DofMap,
    FieldVector,
};
use crate::field::PermeabilityField;
use crate::grid::{CoarseMesh, FineMesh, NeighborhoodDofs, NeighborhoodIndexing};

/// Partition of unity functions, one per coarse node (boundary coarse nodes
/// included so the functions sum to one everywhere). Each is stored as a
/// full fine-node vector supported on the node's patch.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    pub chi: Vec<FieldVector>,
    nx_c: usize,
}

impl PartitionOfUnity {
    #[inline]
    fn coarse_node_index(&self, ci: usize, cj: usize) -> usize {
        cj * (self.nx_c + 1) + ci
    }

    /// The function attached to interior coarse node `k` (neighborhood k).
    pub fn chi_interior<'a>(&'a self, coarse: &CoarseMesh, k: usize) -> &'a FieldVector {
        let (ci, cj) = coarse.interior_node_ij(k);
        &self.chi[self.coarse_node_index(ci, cj)]
    }

    pub fn chi_at(&self, ci: usize, cj: usize) -> &FieldVector {
        &self.chi[self.coarse_node_index(ci, cj)]
    }
}

/// Solve the kappa-harmonic cell problems with bilinear hat boundary data
/// and glue them into the partition of unity.
pub fn build_partition_of_unity(
    fine: &FineMesh,
    coarse: &CoarseMesh,
    kappa: &PermeabilityField,
) -> Result<PartitionOfUnity> {
    let n_nodes = fine.n_nodes();
    let mut chi = vec![FieldVector::zeros(n_nodes); coarse.n_coarse_nodes()];
    for ej in 0..coarse.ny_c {
        for ei in 0..coarse.nx_c {
            let patch = coarse.elem_patch(ei, ej);
            let a_local = assemble_patch_stiffness(fine, kappa, &patch);
            let nodes = patch.nodes(fine);
            let mut interior = Vec::new();
            let mut boundary = Vec::new();
            for (local, &g) in nodes.iter().enumerate() {
                let (i, j) = fine.node_ij(g);
                if patch.on_boundary(i, j) {
                    boundary.push(local);
                } else {
                    interior.push(local);
                }
            }
            let a_ii = a_local.restrict(&interior);
            let factor = BandedCholesky::factor(&a_ii).map_err(|e| {
                Error::numerical("msbasis", format!("cell problem factorization failed: {e}"))
            })?;
            let mut int_pos = vec![usize::MAX; nodes.len()];
            for (p, &loc) in interior.iter().enumerate() {
                int_pos[loc] = p;
            }
            // One cell problem per corner of the coarse element; the boundary
            // data is the corner's bilinear hat restricted to the cell edges.
            let (x0, y0) = (ei as f64 / coarse.nx_c as f64, ej as f64 / coarse.ny_c as f64);
            let (hx_c, hy_c) = (1.0 / coarse.nx_c as f64, 1.0 / coarse.ny_c as f64);
            for corner in 0..4 {
                let (ci, cj) = match corner {
                    0 => (ei, ej),
                    1 => (ei + 1, ej),
                    2 => (ei + 1, ej + 1),
                    _ => (ei, ej + 1),
                };
                let hat = |g: usize| -> f64 {
                    let (x, y) = fine.node_xy(g);
                    let sx = (x - x0) / hx_c;
                    let sy = (y - y0) / hy_c;
                    let fx = if ci == ei { 1.0 - sx } else { sx };
                    let fy = if cj == ej { 1.0 - sy } else { sy };
                    fx * fy
                };
                // rhs_I = -A_IB g_B, assembled from the boundary columns.
                let mut rhs = DVector::zeros(interior.len());
                for &bloc in &boundary {
                    let gval = hat(nodes[bloc]);
                    if gval == 0.0 {
                        continue;
                    }
                    let (cols, vals) = a_local.row(bloc);
                    for (k, &c) in cols.iter().enumerate() {
                        if int_pos[c] != usize::MAX {
                            rhs[int_pos[c]] -= vals[k] * gval;
                        }
                    }
                }
                let sol = factor.solve(&rhs);
                let target = &mut chi[cj * (coarse.nx_c + 1) + ci];
                for &bloc in &boundary {
                    target[nodes[bloc]] = hat(nodes[bloc]);
                }
                for (p, &iloc) in interior.iter().enumerate() {
                    target[nodes[iloc]] = sol[p];
                }
            }
        }
    }
    Ok(PartitionOfUnity {
        chi,
        nx_c: coarse.nx_c,
    })
}

/// Per-fine-cell spectral weight factor `sum_m H^2 |grad chi_m|^2`, averaged
/// over the 2x2 Gauss points of the cell from the Q1 interpolant. The sum
/// runs over the partition-of-unity functions overlapping the cell (the four
/// corners of the containing coarse element).
pub fn pou_gradient_weights(
    fine: &FineMesh,
    coarse: &CoarseMesh,
    pou: &PartitionOfUnity,
) -> Vec<f64> {
    let h2 = coarse.coarse_h() * coarse.coarse_h();
    let (hx, hy) = (fine.hx(), fine.hy());
    let gauss = [
        0.5 - 0.288_675_134_594_812_88,
        0.5 + 0.288_675_134_594_812_88,
    ];
    let mut weights = vec![0.0; fine.n_cells()];
    for cell in 0..fine.n_cells() {
        let (ei, ej) = coarse.elem_of_cell(cell);
        let nodes = fine.cell_nodes(cell);
        let mut acc = 0.0;
        for (ci, cj) in [(ei, ej), (ei + 1, ej), (ei + 1, ej + 1), (ei, ej + 1)] {
            let chi = pou.chi_at(ci, cj);
            let v = [chi[nodes[0]], chi[nodes[1]], chi[nodes[2]], chi[nodes[3]]];
            for &xi in &gauss {
                for &eta in &gauss {
                    // Q1 interpolant gradient on the fine cell.
                    let gx = (-(1.0 - eta) * v[0] + (1.0 - eta) * v[1] + eta * v[2] - eta * v[3]) / hx;
                    let gy = (-(1.0 - xi) * v[0] - xi * v[1] + xi * v[2] + (1.0 - xi) * v[3]) / hy;
                    acc += 0.25 * (gx * gx + gy * gy);
                }
            }
        }
        weights[cell] = h2 * acc;
    }
    weights
}

/// Snapshot basis of one neighborhood: the kappa-harmonic extension of each
/// boundary Kronecker delta, as columns in the patch-local node numbering.
pub fn build_snapshots(
    fine: &FineMesh,
    kappa: &PermeabilityField,
    dofs: &NeighborhoodDofs,
) -> Result<DMatrix<f64>> {
    let a_local = assemble_patch_stiffness(fine, kappa, &dofs.patch);
    let a_ii = a_local.restrict(&dofs.interior_local);
    let factor = BandedCholesky::factor(&a_ii).map_err(|e| {
        Error::numerical("msbasis", format!("snapshot system factorization failed: {e}"))
    })?;
    let n_local = dofs.nodes.len();
    let mut int_pos = vec![usize::MAX; n_local];
    for (p, &loc) in dofs.interior_local.iter().enumerate() {
        int_pos[loc] = p;
    }
    let l = dofs.n_boundary();
    let mut snapshots = DMatrix::zeros(n_local, l);
    for (col, &bloc) in dofs.boundary_local.iter().enumerate() {
        let mut rhs = DVector::zeros(dofs.interior_local.len());
        let (cols, vals) = a_local.row(bloc);
        for (k, &c) in cols.iter().enumerate() {
            if int_pos[c] != usize::MAX {
                rhs[int_pos[c]] -= vals[k];
            }
        }
        let sol = factor.solve(&rhs);
        snapshots[(bloc, col)] = 1.0;
        for (p, &iloc) in dofs.interior_local.iter().enumerate() {
            snapshots[(iloc, col)] = sol[p];
        }
    }
    Ok(snapshots)
}

/// Eigenpairs of the local spectral problem in snapshot coordinates:
/// kappa-stiffness against the kappa-hat weighted mass. Returns all
/// eigenvalues ascending and the first `l` eigenvectors.
pub fn spectral_select(
    fine: &FineMesh,
    kappa: &PermeabilityField,
    khat_factor: &[f64],
    dofs: &NeighborhoodDofs,
    snapshots: &DMatrix<f64>,
    l: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let l_i = snapshots.ncols();
    if l == 0 || l > l_i {
        return Err(Error::config(format!(
            "requested {l} eigenfunctions from a {l_i}-dimensional snapshot space"
        )));
    }
    let a_local = assemble_patch_stiffness(fine, kappa, &dofs.patch);
    let patch_cells = dofs.patch.cells(fine);
    let cell_set: std::collections::HashMap<usize, f64> = patch_cells
        .iter()
        .map(|&c| (c, kappa.value(c) * khat_factor[c]))
        .collect();
    let m_hat = assemble_patch_weighted_mass(fine, &dofs.patch, |cell| cell_set[&cell]);
    let a_spec = {
        let t = a_local.matmul_dense(snapshots);
        snapshots.transpose() * t
    };
    let b_spec = {
        let t = m_hat.matmul_dense(snapshots);
        snapshots.transpose() * t
    };
    let (vals, vecs) = fem::eig_sym_generalized(&a_spec, &b_spec).map_err(|e| {
        Error::numerical(
            "msbasis",
            format!("local spectral problem failed (kappa-hat mass not SPD? broken partition of unity): {e}"),
        )
    })?;
    Ok((vals, vecs.columns(0, l).into_owned()))
}

/// The assembled offline space over interior fine DOFs.
#[derive(Debug, Clone)]
pub struct OfflineSpace {
    /// Basis columns, kappa-energy orthonormal within each neighborhood.
    pub basis: DMatrix<f64>,
    /// Column range owned by each neighborhood.
    pub cols: Vec<std::ops::Range<usize>>,
    /// Ascending eigenvalues retained per neighborhood.
    pub eigenvalues: Vec<Vec<f64>>,
}

impl OfflineSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_neighborhoods(&self) -> usize {
        self.cols.len()
    }
}

/// Build the offline space with `l` basis functions per neighborhood:
/// snapshots, spectral selection, multiplication by the partition of unity,
/// and per-neighborhood kappa-energy orthonormalization.
pub fn build_offline_space(
    fine: &FineMesh,
    coarse: &CoarseMesh,
    idx: &NeighborhoodIndexing,
    kappa: &PermeabilityField,
    pou: &PartitionOfUnity,
    l: usize,
    map: &DofMap,
) -> Result<OfflineSpace> {
    let khat_factor = pou_gradient_weights(fine, coarse, pou);
    let n_int = map.n();
    let mut columns: Vec<FieldVector> = Vec::new();
    let mut cols = Vec::new();
    let mut eigenvalues = Vec::new();
    for (k, dofs) in idx.per_nbhd.iter().enumerate() {
        let snapshots = build_snapshots(fine, kappa, dofs)?;
        let l_take = l.min(snapshots.ncols());
        let (vals, vecs) = spectral_select(fine, kappa, &khat_factor, dofs, &snapshots, l_take)?;
        let chi = pou.chi_interior(coarse, k);
        let a_local = assemble_patch_stiffness(fine, kappa, &dofs.patch);
        let start = columns.len();
        let mut local_basis: Vec<DVector<f64>> = Vec::new();
        let mut kept_vals = Vec::new();
        for j in 0..l_take {
            // chi-weighted snapshot expansion, in patch-local coordinates.
            let expanded = &snapshots * vecs.column(j);
            let mut v = DVector::zeros(dofs.nodes.len());
            for (loc, &g) in dofs.nodes.iter().enumerate() {
                v[loc] = chi[g] * expanded[loc];
            }
            let norm0 = a_local.quadratic_form(&v).sqrt();
            for w in &local_basis {
                let c = a_local.bilinear(w, &v);
                v -= w * c;
            }
            let norm = a_local.quadratic_form(&v).sqrt();
            if norm <= 1e-10 * norm0.max(1e-300) {
                log::warn!(
                    "neighborhood {k}: dropping basis candidate {j} (rank loss after chi multiplication)"
                );
                continue;
            }
            v /= norm;
            local_basis.push(v);
            kept_vals.push(vals[j]);
        }
        for v in &local_basis {
            let mut g = FieldVector::zeros(n_int);
            for (loc, &node) in dofs.nodes.iter().enumerate() {
                if let Some(p) = map.pos(node) {
                    g[p] = v[loc];
                }
            }
            columns.push(g);
        }
        cols.push(start..columns.len());
        eigenvalues.push(kept_vals);
    }
    let mut basis = DMatrix::zeros(n_int, columns.len());
    for (j, c) in columns.iter().enumerate() {
        basis.set_column(j, c);
    }
    Ok(OfflineSpace {
        basis,
        cols,
        eigenvalues,
    })
}

/// Save an offline space in a plain text container; round-trips exactly.
pub fn save_offline(space: &OfflineSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!(
        "offline {} {} {}\n",
        space.basis.nrows(),
        space.basis.ncols(),
        space.cols.len()
    ));
    for (r, vals) in space.cols.iter().zip(space.eigenvalues.iter()) {
        out.push_str(&format!("{} {}", r.start, r.end));
        for v in vals {
            out.push_str(&format!(" {v}"));
        }
        out.push('\n');
    }
    for j in 0..space.basis.ncols() {
        let col: Vec<String> = space.basis.column(j).iter().map(|v| format!("{v}")).collect();
        out.push_str(&col.join(" "));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_offline(path: impl AsRef<Path>) -> Result<OfflineSpace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "offline" {
        return Err(perr(1, "expected header `offline nrows ncols n_nbhd`".into()));
    }
    let nrows: usize = toks[1].parse().map_err(|_| perr(1, "bad nrows".into()))?;
    let ncols: usize = toks[2].parse().map_err(|_| perr(1, "bad ncols".into()))?;
    let n_nbhd: usize = toks[3].parse().map_err(|_| perr(1, "bad n_nbhd".into()))?;
    let mut cols = Vec::with_capacity(n_nbhd);
    let mut eigenvalues = Vec::with_capacity(n_nbhd);
    for k in 0..n_nbhd {
        let line = lines
            .next()
            .ok_or_else(|| perr(2 + k, "missing neighborhood record".into()))?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() < 2 {
            return Err(perr(2 + k, "bad neighborhood record".into()));
        }
        let s: usize = t[0].parse().map_err(|_| perr(2 + k, "bad range".into()))?;
        let e: usize = t[1].parse().map_err(|_| perr(2 + k, "bad range".into()))?;
        let vals: Vec<f64> = t[2..]
            .iter()
            .map(|x| x.parse().map_err(|_| perr(2 + k, "bad eigenvalue".into())))
            .collect::<Result<_>>()?;
        cols.push(s..e);
        eigenvalues.push(vals);
    }
    let mut basis = DMatrix::zeros(nrows, ncols);
    for j in 0..ncols {
        let line = lines
            .next()
            .ok_or_else(|| perr(2 + n_nbhd + j, "missing basis column".into()))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| perr(2 + n_nbhd + j, "bad value".into())))
            .collect::<Result<_>>()?;
        if vals.len() != nrows {
            return Err(perr(2 + n_nbhd + j, format!("column length {} != {nrows}", vals.len())));
        }
        basis.set_column(j, &DVector::from_vec(vals));
    }
    Ok(OfflineSpace {
        basis,
        cols,
        eigenvalues,
    })
}
