//! Banded Cholesky factorization for symmetric positive definite systems.
//!
//! The lexicographic node numbering makes every assembled operator a band
//! matrix, so a band factorization is an exact direct solver here. For a
//! dense matrix the bandwidth degenerates to n-1 and this is ordinary
//! Cholesky.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Lower-triangular factor, row-major band storage: row i holds entries
    /// for columns i-bw..=i at `band[i * (bw + 1) + (j - i + bw)]`.
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::numerical("fem", "cannot factor non-square matrix"));
        }
        let n = a.nrows;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (k, &c) in cols.iter().enumerate() {
                if c <= r {
                    band[r * w + (c + bw - r)] = vals[k];
                }
            }
        }
        // In-place band Cholesky.
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = band[j * w + bw];
            for k in lo..j {
                let ljk = band[j * w + (k + bw - j)];
                d -= ljk * ljk;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::numerical(
                    "fem",
                    format!("matrix not positive definite (pivot {d:.3e} at row {j})"),
                ));
            }
            let djj = d.sqrt();
            band[j * w + bw] = djj;
            let hi = (j + bw + 1).min(n);
            for i in (j + 1)..hi {
                let ilo = i.saturating_sub(bw).max(lo);
                let mut s = band[i * w + (j + bw - i)];
                for k in ilo..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                band[i * w + (j + bw - i)] = s / djj;
            }
        }
        Ok(BandedCholesky { n, bw, band })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n);
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut x = b.clone();
        // forward: L y = b
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.band[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s / self.band[i * w + bw];
        }
        // backward: L' x = y
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = x[i];
            for k in (i + 1)..hi {
                s -= self.band[k * w + (i + bw - k)] * x[k];
            }
            x[i] = s / self.band[i * w + bw];
        }
        x
    }
}

/// Direct solve of a symmetric positive definite system.
pub fn solve_spd(a: &CsrMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(BandedCholesky::factor(a)?.solve(b))
}
