//! Galerkin projection of the fine-grid operators onto a reduced basis.
//!
//! The operator caches `A V` and `M V` alongside the projected matrices so
//! that appending online columns and forming reduced right-hand sides costs
//! one sparse matvec per new column instead of a full re-projection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{CsrMatrix, FieldVector};

#[derive(Debug, Clone)]
pub struct ReducedOperator {
    /// Basis columns over interior fine DOFs.
    pub basis: DMatrix<f64>,
    /// Cached products A * basis and M * basis.
    pub av: DMatrix<f64>,
    pub mv: DMatrix<f64>,
    /// Projected stiffness and mass, basis' A basis and basis' M basis.
    pub a_red: DMatrix<f64>,
    pub m_red: DMatrix<f64>,
}

impl ReducedOperator {
    pub fn project(a: &CsrMatrix, m: &CsrMatrix, basis: DMatrix<f64>) -> Result<Self> {
        if a.nrows != basis.nrows() || m.nrows != basis.nrows() {
            return Err(Error::config(format!(
                "basis has {} rows but operators are {}x{} / {}x{}",
                basis.nrows(),
                a.nrows,
                a.ncols,
                m.nrows,
                m.ncols
            )));
        }
        let av = a.matmul_dense(&basis);
        let mv = m.matmul_dense(&basis);
        let a_red = basis.transpose() * &av;
        let m_red = basis.transpose() * &mv;
        Ok(ReducedOperator {
            basis,
            av,
            mv,
            a_red,
            m_red,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_fine(&self) -> usize {
        self.basis.nrows()
    }

    /// Append new basis columns, updating the projections incrementally.
    pub fn append_columns(&mut self, a: &CsrMatrix, m: &CsrMatrix, cols: &DMatrix<f64>) {
        assert_eq!(cols.nrows(), self.basis.nrows());
        let r0 = self.dim();
        let p = cols.ncols();
        let r1 = r0 + p;
        let a_new = a.matmul_dense(cols);
        let m_new = m.matmul_dense(cols);
        let mut basis = DMatrix::zeros(self.n_fine(), r1);
        basis.columns_mut(0, r0).copy_from(&self.basis);
        basis.columns_mut(r0, p).copy_from(cols);
        let mut av = DMatrix::zeros(self.n_fine(), r1);
        av.columns_mut(0, r0).copy_from(&self.av);
        av.columns_mut(r0, p).copy_from(&a_new);
        let mut mv = DMatrix::zeros(self.n_fine(), r1);
        mv.columns_mut(0, r0).copy_from(&self.mv);
        mv.columns_mut(r0, p).copy_from(&m_new);
        // Block update of the projected matrices; symmetry of A and M gives
        // the off-diagonal blocks as transposes of each other.
        let cross_a = self.basis.transpose() * &a_new; // r0 x p
        let cross_m = self.basis.transpose() * &m_new;
        let corner_a = cols.transpose() * &a_new; // p x p
        let corner_m = cols.transpose() * &m_new;
        let mut a_red = DMatrix::zeros(r1, r1);
        a_red.view_mut((0, 0), (r0, r0)).copy_from(&self.a_red);
        a_red.view_mut((0, r0), (r0, p)).copy_from(&cross_a);
        a_red.view_mut((r0, 0), (p, r0)).copy_from(&cross_a.transpose());
        a_red.view_mut((r0, r0), (p, p)).copy_from(&corner_a);
        let mut m_red = DMatrix::zeros(r1, r1);
        m_red.view_mut((0, 0), (r0, r0)).copy_from(&self.m_red);
        m_red.view_mut((0, r0), (r0, p)).copy_from(&cross_m);
        m_red.view_mut((r0, 0), (p, r0)).copy_from(&cross_m.transpose());
        m_red.view_mut((r0, r0), (p, p)).copy_from(&corner_m);
        self.basis = basis;
        self.av = av;
        self.mv = mv;
        self.a_red = a_red;
        self.m_red = m_red;
    }

    /// Drop all columns past the first `r` (discarding online enrichment).
    pub fn truncate(&mut self, r: usize) {
        assert!(r <= self.dim());
        self.basis = self.basis.columns(0, r).into_owned();
        self.av = self.av.columns(0, r).into_owned();
        self.mv = self.mv.columns(0, r).into_owned();
        self.a_red = self.a_red.view((0, 0), (r, r)).into_owned();
        self.m_red = self.m_red.view((0, 0), (r, r)).into_owned();
    }

    /// Lift reduced coordinates to a fine interior vector.
    pub fn reconstruct(&self, coords: &DVector<f64>) -> FieldVector {
        &self.basis * coords
    }

    /// Reduced right-hand side basis' f for a fine interior vector f.
    pub fn reduce_rhs(&self, f: &FieldVector) -> DVector<f64> {
        self.basis.transpose() * f
    }

    /// Coordinates of the M-orthogonal (L2) projection of a fine vector.
    pub fn l2_projection_coords(&self, v: &FieldVector) -> Result<DVector<f64>> {
        let rhs = self.mv.transpose() * v;
        self.m_red
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| Error::numerical("rom", "reduced mass matrix not positive definite"))
    }
}
