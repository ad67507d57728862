//! Dense symmetric generalized eigensolver via B-Cholesky reduction.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve A v = lambda B v for symmetric A and symmetric positive definite B.
/// Returns eigenvalues in ascending order and B-orthonormal eigenvectors as
/// matrix columns.
pub fn eig_sym_generalized(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    assert_eq!(a.nrows(), a.ncols());
    assert_eq!(a.shape(), b.shape());
    let n = a.nrows();
    let chol = Cholesky::new(b.clone())
        .ok_or_else(|| Error::numerical("fem", "B matrix in generalized eigenproblem is not positive definite"))?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}, symmetrized against roundoff.
    let x = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::numerical("fem", "singular Cholesky factor"))?;
    let c_t = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::numerical("fem", "singular Cholesky factor"))?;
    let c = (&c_t + c_t.transpose()) * 0.5;
    let se = c.symmetric_eigen();
    // v = L^{-T} y, column by column, then sort ascending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    let lt = l.transpose();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = se.eigenvalues[src];
        let y = se.eigenvectors.column(src).into_owned();
        let v = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::numerical("fem", "singular Cholesky factor"))?;
        vectors.set_column(dst, &v);
    }
    Ok((values, vectors))
}
