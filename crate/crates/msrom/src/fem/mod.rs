//! Fine-grid Q1 finite element assembly, Dirichlet elimination, sparse and
//! dense solves, and the norms used for error reporting.

pub mod banded;
pub mod eig;
pub mod sparse;

pub use banded::{solve_spd, BandedCholesky};
pub use eig::eig_sym_generalized;
pub use sparse::CsrMatrix;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::field::PermeabilityField;
use crate::grid::{FineMesh, Patch};

/// Nodal coefficient vector over the fine mesh (or a restriction of it).
pub type FieldVector = DVector<f64>;

const GAUSS_2: [f64; 2] = [
    0.5 - 0.288675134594812882254574390251, // 0.5 - 1/(2 sqrt 3)
    0.5 + 0.288675134594812882254574390251,
];

/// Q1 shape functions on the unit square, corner order
/// (0,0), (1,0), (1,1), (0,1).
#[inline]
fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

#[inline]
fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

/// Element stiffness for a hx x hy rectangle with constant coefficient,
/// integrated with 2x2 Gauss (exact here).
pub fn element_stiffness(hx: f64, hy: f64, kappa: f64) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    let w = 0.25 * hx * hy;
    for &xi in &GAUSS_2 {
        for &eta in &GAUSS_2 {
            let g = shape_grad(xi, eta);
            for a in 0..4 {
                for b in 0..4 {
                    let gx = g[a][0] / hx * (g[b][0] / hx);
                    let gy = g[a][1] / hy * (g[b][1] / hy);
                    k[a][b] += kappa * (gx + gy) * w;
                }
            }
        }
    }
    k
}

pub fn element_mass(hx: f64, hy: f64) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    let w = 0.25 * hx * hy;
    for &xi in &GAUSS_2 {
        for &eta in &GAUSS_2 {
            let n = shape(xi, eta);
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += n[a] * n[b] * w;
                }
            }
        }
    }
    m
}

fn assemble_cells<F, G>(
    fine: &FineMesh,
    cells: impl Iterator<Item = usize>,
    n_dofs: usize,
    local_of_node: F,
    elem: G,
) -> CsrMatrix
where
    F: Fn(usize) -> usize,
    G: Fn(usize) -> [[f64; 4]; 4],
{
    let mut triplets = Vec::new();
    for cell in cells {
        let nodes = fine.cell_nodes(cell);
        let ke = elem(cell);
        for a in 0..4 {
            let ra = local_of_node(nodes[a]);
            for b in 0..4 {
                triplets.push((ra, local_of_node(nodes[b]), ke[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(n_dofs, n_dofs, &triplets)
}

/// Global stiffness with per-cell coefficient kappa, over all fine nodes
/// (no boundary conditions applied).
pub fn assemble_stiffness(fine: &FineMesh, kappa: &PermeabilityField) -> Result<CsrMatrix> {
    if !kappa.matches(fine) {
        return Err(Error::config(format!(
            "field dimensions {}x{} do not match mesh {}x{}",
            kappa.nx, kappa.ny, fine.nx, fine.ny
        )));
    }
    let (hx, hy) = (fine.hx(), fine.hy());
    Ok(assemble_cells(
        fine,
        0..fine.n_cells(),
        fine.n_nodes(),
        |n| n,
        |cell| element_stiffness(hx, hy, kappa.value(cell)),
    ))
}

/// Stiffness with unit coefficient (the unweighted energy norm matrix).
pub fn assemble_unit_stiffness(fine: &FineMesh) -> CsrMatrix {
    let (hx, hy) = (fine.hx(), fine.hy());
    let ke = element_stiffness(hx, hy, 1.0);
    assemble_cells(fine, 0..fine.n_cells(), fine.n_nodes(), |n| n, |_| ke)
}

pub fn assemble_mass(fine: &FineMesh) -> CsrMatrix {
    let (hx, hy) = (fine.hx(), fine.hy());
    let me = element_mass(hx, hy);
    assemble_cells(fine, 0..fine.n_cells(), fine.n_nodes(), |n| n, |_| me)
}

/// Stiffness over a patch in the patch-local node numbering.
pub fn assemble_patch_stiffness(
    fine: &FineMesh,
    kappa: &PermeabilityField,
    patch: &Patch,
) -> CsrMatrix {
    let (hx, hy) = (fine.hx(), fine.hy());
    assemble_cells(
        fine,
        patch.cells(fine).into_iter(),
        patch.n_nodes(),
        |n| {
            let (i, j) = fine.node_ij(n);
            patch.local_node(i, j)
        },
        |cell| element_stiffness(hx, hy, kappa.value(cell)),
    )
}

pub fn assemble_patch_mass(fine: &FineMesh, patch: &Patch) -> CsrMatrix {
    let (hx, hy) = (fine.hx(), fine.hy());
    let me = element_mass(hx, hy);
    assemble_cells(
        fine,
        patch.cells(fine).into_iter(),
        patch.n_nodes(),
        |n| {
            let (i, j) = fine.node_ij(n);
            patch.local_node(i, j)
        },
        |_| me,
    )
}

/// Mass over a patch with a per-cell scalar weight (used for the spectral
/// weight kappa-hat).
pub fn assemble_patch_weighted_mass<W>(fine: &FineMesh, patch: &Patch, weight: W) -> CsrMatrix
where
    W: Fn(usize) -> f64,
{
    let (hx, hy) = (fine.hx(), fine.hy());
    let me = element_mass(hx, hy);
    assemble_cells(
        fine,
        patch.cells(fine).into_iter(),
        patch.n_nodes(),
        |n| {
            let (i, j) = fine.node_ij(n);
            patch.local_node(i, j)
        },
        |cell| {
            let w = weight(cell);
            let mut scaled = me;
            for row in scaled.iter_mut() {
                for v in row.iter_mut() {
                    *v *= w;
                }
            }
            scaled
        },
    )
}

/// Index map from a full vector to a kept subset (Dirichlet elimination).
#[derive(Debug, Clone)]
pub struct DofMap {
    pub kept: Vec<usize>,
    pub full_len: usize,
    pos: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(full_len: usize, kept: Vec<usize>) -> Self {
        debug_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        let mut pos = vec![None; full_len];
        for (k, &g) in kept.iter().enumerate() {
            pos[g] = Some(k);
        }
        DofMap { kept, full_len, pos }
    }

    /// Map keeping the interior (non-boundary) fine nodes.
    pub fn interior(fine: &FineMesh) -> Self {
        DofMap::new(fine.n_nodes(), fine.interior_nodes())
    }

    pub fn n(&self) -> usize {
        self.kept.len()
    }

    #[inline]
    pub fn pos(&self, full: usize) -> Option<usize> {
        self.pos[full]
    }

    pub fn restrict(&self, full: &FieldVector) -> FieldVector {
        assert_eq!(full.len(), self.full_len);
        FieldVector::from_iterator(self.kept.len(), self.kept.iter().map(|&g| full[g]))
    }

    pub fn extend(&self, kept: &FieldVector) -> FieldVector {
        assert_eq!(kept.len(), self.kept.len());
        let mut full = FieldVector::zeros(self.full_len);
        for (k, &g) in self.kept.iter().enumerate() {
            full[g] = kept[k];
        }
        full
    }
}

/// Eliminate Dirichlet (zero) boundary nodes: returns the interior system
/// and the map back to full vectors.
pub fn apply_dirichlet(
    a: &CsrMatrix,
    rhs: &FieldVector,
    boundary_nodes: &[usize],
) -> (CsrMatrix, FieldVector, DofMap) {
    let n = a.nrows;
    let mut is_boundary = vec![false; n];
    for &b in boundary_nodes {
        is_boundary[b] = true;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
    let map = DofMap::new(n, kept);
    (a.restrict(&map.kept), map.restrict(rhs), map)
}

/// The three norms used for reporting and residual estimation. Matrices may
/// be full-space or interior-restricted; vectors must match.
#[derive(Debug, Clone)]
pub struct Norms {
    /// Unit-coefficient stiffness: the energy norm used for e_a.
    pub a_unit: CsrMatrix,
    /// Kappa-weighted stiffness: the norm used for residual estimation.
    pub a_kappa: CsrMatrix,
    pub mass: CsrMatrix,
}

impl Norms {
    pub fn assemble(fine: &FineMesh, kappa: &PermeabilityField) -> Result<Self> {
        Ok(Norms {
            a_unit: assemble_unit_stiffness(fine),
            a_kappa: assemble_stiffness(fine, kappa)?,
            mass: assemble_mass(fine),
        })
    }

    pub fn restricted(fine: &FineMesh, kappa: &PermeabilityField, map: &DofMap) -> Result<Self> {
        let full = Norms::assemble(fine, kappa)?;
        Ok(Norms {
            a_unit: full.a_unit.restrict(&map.kept),
            a_kappa: full.a_kappa.restrict(&map.kept),
            mass: full.mass.restrict(&map.kept),
        })
    }

    pub fn energy(&self, u: &FieldVector) -> f64 {
        self.a_unit.quadratic_form(u).sqrt()
    }

    pub fn kappa_energy(&self, u: &FieldVector) -> f64 {
        self.a_kappa.quadratic_form(u).sqrt()
    }

    pub fn l2(&self, u: &FieldVector) -> f64 {
        self.mass.quadratic_form(u).sqrt()
    }

    /// (energy, l2, kappa-energy).
    pub fn norms(&self, u: &FieldVector) -> (f64, f64, f64) {
        (self.energy(u), self.l2(u), self.kappa_energy(u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_fine_mesh;
    use approx::assert_abs_diff_eq;

    #[test]
    fn element_stiffness_square_unit_kappa() {
        let k = element_stiffness(1.0, 1.0, 1.0);
        for a in 0..4 {
            assert_abs_diff_eq!(k[a][a], 2.0 / 3.0, epsilon = 1e-14);
            let row_sum: f64 = k[a].iter().sum();
            assert_abs_diff_eq!(row_sum, 0.0, epsilon = 1e-14);
        }
        // adjacent pairs -1/6, opposite corners -1/3
        assert_abs_diff_eq!(k[0][1], -1.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k[0][3], -1.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k[0][2], -1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn element_matrices_match_high_order_quadrature_oracle() {
        // Independent oracle: 4x4 Gauss-Legendre on the same rectangle.
        let pts = [
            0.069431844202973712388026755553,
            0.330009478207571867598667120448,
            0.669990521792428132401332879552,
            0.930568155797026287611973244447,
        ];
        let wts = [
            0.173927422568726928686531974611,
            0.326072577431273071313468025389,
            0.326072577431273071313468025389,
            0.173927422568726928686531974611,
        ];
        let (hx, hy, kappa) = (0.37, 0.81, 2.5);
        let mut k_oracle = [[0.0; 4]; 4];
        let mut m_oracle = [[0.0; 4]; 4];
        for (i, &xi) in pts.iter().enumerate() {
            for (j, &eta) in pts.iter().enumerate() {
                let w = wts[i] * wts[j] * hx * hy;
                let n = shape(xi, eta);
                let g = shape_grad(xi, eta);
                for a in 0..4 {
                    for b in 0..4 {
                        k_oracle[a][b] +=
                            kappa * (g[a][0] * g[b][0] / (hx * hx) + g[a][1] * g[b][1] / (hy * hy)) * w;
                        m_oracle[a][b] += n[a] * n[b] * w;
                    }
                }
            }
        }
        let k = element_stiffness(hx, hy, kappa);
        let m = element_mass(hx, hy);
        for a in 0..4 {
            for b in 0..4 {
                assert_abs_diff_eq!(k[a][b], k_oracle[a][b], epsilon = 1e-12);
                assert_abs_diff_eq!(m[a][b], m_oracle[a][b], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unit_mass_element_exact() {
        let m = element_mass(1.0, 1.0);
        let expect = [
            [4.0, 2.0, 1.0, 2.0],
            [2.0, 4.0, 2.0, 1.0],
            [1.0, 2.0, 4.0, 2.0],
            [2.0, 1.0, 2.0, 4.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert_abs_diff_eq!(m[a][b], expect[a][b] / 36.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let fine = build_fine_mesh(6, 4).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a = assemble_stiffness(&fine, &kappa).unwrap();
        let ones = FieldVector::from_element(fine.n_nodes(), 1.0);
        assert!(a.matvec(&ones).amax() < 1e-12);
        assert!(a.asymmetry() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn stiffness_linear_in_kappa() {
        let fine = build_fine_mesh(4, 4).unwrap();
        let one = PermeabilityField::constant(&fine, 1.0);
        let mut scaled = one.clone();
        for v in scaled.values.iter_mut() {
            *v *= 7.5;
        }
        let a1 = assemble_stiffness(&fine, &one).unwrap();
        let a2 = assemble_stiffness(&fine, &scaled).unwrap();
        for (r, c, v) in a1.iter_entries() {
            assert_abs_diff_eq!(a2.get(r, c), 7.5 * v, epsilon = 1e-12);
        }
    }

    #[test]
    fn mass_integrates_one() {
        for (nx, ny) in [(2, 2), (5, 3), (8, 8)] {
            let fine = build_fine_mesh(nx, ny).unwrap();
            let m = assemble_mass(&fine);
            let ones = FieldVector::from_element(fine.n_nodes(), 1.0);
            assert_abs_diff_eq!(m.bilinear(&ones, &ones), 1.0, epsilon = 1e-12);
            assert!(m.iter_entries().all(|(_, _, v)| v >= 0.0));
        }
    }

    #[test]
    fn dirichlet_all_boundary_gives_zero_solution() {
        let fine = build_fine_mesh(2, 2).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a = assemble_stiffness(&fine, &kappa).unwrap();
        let rhs = FieldVector::from_element(fine.n_nodes(), 1.0);
        let all: Vec<usize> = (0..fine.n_nodes()).collect();
        let (_, _, map) = apply_dirichlet(&a, &rhs, &all);
        assert_eq!(map.n(), 0);
        let full = map.extend(&FieldVector::zeros(0));
        assert!(full.amax() == 0.0);
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let fine = build_fine_mesh(8, 8).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a = assemble_stiffness(&fine, &kappa).unwrap();
        let rhs = FieldVector::zeros(fine.n_nodes());
        let (ai, ri, _) = apply_dirichlet(&a, &rhs, &fine.boundary_nodes());
        let x = solve_spd(&ai, &ri).unwrap();
        assert_eq!(x.amax(), 0.0);
    }

    /// Solve -div(grad u) = f with f = 2 pi^2 sin(pi x) sin(pi y) and check
    /// O(h^2) L2 convergence to u = sin(pi x) sin(pi y).
    fn poisson_l2_error(n: usize) -> f64 {
        use std::f64::consts::PI;
        let fine = build_fine_mesh(n, n).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a = assemble_stiffness(&fine, &kappa).unwrap();
        let m = assemble_mass(&fine);
        let f = FieldVector::from_fn(fine.n_nodes(), |id, _| {
            let (x, y) = fine.node_xy(id);
            2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()
        });
        let rhs = m.matvec(&f);
        let (ai, ri, map) = apply_dirichlet(&a, &rhs, &fine.boundary_nodes());
        let x = solve_spd(&ai, &ri).unwrap();
        let u = map.extend(&x);
        let err = FieldVector::from_fn(fine.n_nodes(), |id, _| {
            let (px, py) = fine.node_xy(id);
            u[id] - (PI * px).sin() * (PI * py).sin()
        });
        m.quadratic_form(&err).sqrt()
    }

    #[test]
    fn poisson_manufactured_solution_second_order() {
        let e1 = poisson_l2_error(8);
        let e2 = poisson_l2_error(16);
        let e3 = poisson_l2_error(32);
        let r1 = (e1 / e2).log2();
        let r2 = (e2 / e3).log2();
        assert!((1.8..=2.2).contains(&r1), "order {r1}");
        assert!((1.8..=2.2).contains(&r2), "order {r2}");
    }

    #[test]
    fn galerkin_orthogonality_of_poisson_error() {
        use std::f64::consts::PI;
        let fine = build_fine_mesh(16, 16).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a = assemble_stiffness(&fine, &kappa).unwrap();
        let m = assemble_mass(&fine);
        let f = FieldVector::from_fn(fine.n_nodes(), |id, _| {
            let (x, y) = fine.node_xy(id);
            2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()
        });
        let rhs = m.matvec(&f);
        let (ai, ri, _) = apply_dirichlet(&a, &rhs, &fine.boundary_nodes());
        let x = solve_spd(&ai, &ri).unwrap();
        // A x - rhs is the A-inner-product of the error with each interior
        // basis function; it must vanish to solver tolerance.
        let res = ai.matvec(&x) - &ri;
        assert!(res.amax() <= 1e-8 * ri.amax().max(1.0));
    }

    #[test]
    fn norms_zero_vector() {
        let fine = build_fine_mesh(4, 4).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let norms = Norms::assemble(&fine, &kappa).unwrap();
        let z = FieldVector::zeros(fine.n_nodes());
        assert_eq!(norms.norms(&z), (0.0, 0.0, 0.0));
    }

    #[test]
    fn l2_norm_of_parabola_interpolant() {
        // integral of x^2 (1-x)^2 over (0,1) is 1/30; the y direction is
        // trivial, so the L2 norm tends to 1/sqrt(30).
        let fine = build_fine_mesh(64, 64).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let norms = Norms::assemble(&fine, &kappa).unwrap();
        let u = FieldVector::from_fn(fine.n_nodes(), |id, _| {
            let (x, _) = fine.node_xy(id);
            x * (1.0 - x)
        });
        assert_abs_diff_eq!(norms.l2(&u), (1.0f64 / 30.0).sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn energy_norms_coincide_for_unit_kappa() {
        let fine = build_fine_mesh(8, 8).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let norms = Norms::assemble(&fine, &kappa).unwrap();
        let u = FieldVector::from_fn(fine.n_nodes(), |id, _| {
            let (x, y) = fine.node_xy(id);
            (x * y).sin()
        });
        assert_abs_diff_eq!(norms.energy(&u), norms.kappa_energy(&u), epsilon = 1e-12);
    }
}
