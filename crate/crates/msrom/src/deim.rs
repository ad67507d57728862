//! Hyper-reduction of nodewise nonlinear terms: POD compression of
//! nonlinearity snapshots and discrete empirical interpolation (DEIM).
//!
//! The fitted model approximates f by Phi (P' Phi)^{-1} P' f, so the
//! nonlinearity is only ever evaluated at the sample rows picked by the
//! greedy index selection; composed with the reduced basis this removes
//! every O(n_fine) operation from the online stage.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::FieldVector;
use crate::rom::ReducedOperator;
use crate::stepper::SampledNonlinear;

/// Index of the entry with the largest magnitude; ties go to the lowest
/// index (strict comparison while scanning).
fn argmax_abs(v: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_val = v[0].abs();
    for (i, x) in v.iter().enumerate().skip(1) {
        if x.abs() > best_val {
            best = i;
            best_val = x.abs();
        }
    }
    best
}

/// Proper orthogonal decomposition of uncentered snapshots. Keeps the
/// smallest mode count whose squared singular values reach `energy_cutoff`
/// of the total, optionally capped at `max_modes`. Returns the orthonormal
/// modes and all singular values (descending).
pub fn pod(
    snapshots: &DMatrix<f64>,
    energy_cutoff: f64,
    max_modes: Option<usize>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if snapshots.ncols() == 0 {
        return Err(Error::config("POD requires at least one snapshot"));
    }
    if !(energy_cutoff > 0.0 && energy_cutoff <= 1.0) {
        return Err(Error::config(format!(
            "POD energy cutoff must be in (0, 1], got {energy_cutoff}"
        )));
    }
    // Method of snapshots: eigendecomposition of the small Gram matrix is
    // far more robust than an iterative SVD of the tall snapshot matrix.
    let gram = snapshots.transpose() * snapshots;
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma = DVector::from_iterator(
        order.len(),
        order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()),
    );
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::numerical("deim", "all snapshots are zero"));
    }
    let mut m = sigma.len();
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s * s;
        // Never keep numerically zero modes.
        if acc >= energy_cutoff * total || *s <= 1e-14 * sigma[0] {
            m = i + 1;
            if *s <= 1e-14 * sigma[0] {
                m = i.max(1);
            }
            break;
        }
    }
    if let Some(cap) = max_modes {
        if cap == 0 {
            return Err(Error::config("mode cap must be at least 1"));
        }
        m = m.min(cap);
    }
    let mut u = DMatrix::zeros(snapshots.nrows(), m);
    for j in 0..m {
        let col = snapshots * eig.eigenvectors.column(order[j]) / sigma[j];
        u.set_column(j, &col);
    }
    // Polish orthonormality that the scaling may have lost in low digits.
    let u = u.qr().q().columns(0, m).into_owned();
    Ok((u, sigma))
}

/// Greedy DEIM index selection: the first index maximizes |phi_1|; each
/// subsequent index maximizes the magnitude of the interpolation residual of
/// the next mode on the indices chosen so far.
pub fn deim_indices(phi: &DMatrix<f64>) -> Result<Vec<usize>> {
    let m = phi.ncols();
    if m == 0 {
        return Err(Error::config("DEIM needs at least one mode"));
    }
    let mut indices = vec![argmax_abs(&phi.column(0).into_owned())];
    for j in 1..m {
        let sub = DMatrix::from_fn(j, j, |r, c| phi[(indices[r], c)]);
        let rhs = DVector::from_fn(j, |r, _| phi[(indices[r], j)]);
        let c = sub.lu().solve(&rhs).ok_or_else(|| {
            Error::numerical("deim", format!("singular interpolation system at mode {j}"))
        })?;
        let residual = phi.column(j) - phi.columns(0, j) * c;
        indices.push(argmax_abs(&residual));
    }
    Ok(indices)
}

/// A fitted DEIM model: modes, sample indices, and the factorized
/// interpolation matrix P' Phi.
#[derive(Debug, Clone)]
pub struct DeimModel {
    pub phi: DMatrix<f64>,
    pub indices: Vec<usize>,
    /// Singular values of the snapshot matrix the modes came from (all of
    /// them, descending; empty when the modes were supplied directly).
    pub singular_values: Vec<f64>,
    /// Where the snapshots came from (reporting only).
    pub provenance: String,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DeimModel {
    pub fn new(phi: DMatrix<f64>, indices: Vec<usize>) -> Result<Self> {
        let m = phi.ncols();
        if indices.len() != m {
            return Err(Error::config(format!(
                "DEIM needs one index per mode: {} indices for {m} modes",
                indices.len()
            )));
        }
        let p_phi = DMatrix::from_fn(m, m, |r, c| phi[(indices[r], c)]);
        let lu = p_phi.lu();
        if !lu.is_invertible() {
            return Err(Error::numerical("deim", "interpolation matrix P' Phi is singular"));
        }
        log::debug!(
            "DEIM interpolation matrix determinant {:.3e}",
            lu.determinant()
        );
        Ok(DeimModel {
            phi,
            indices,
            singular_values: Vec::new(),
            provenance: String::new(),
            lu,
        })
    }

    /// POD + greedy selection in one call.
    pub fn build(
        snapshots: &DMatrix<f64>,
        energy_cutoff: f64,
        max_modes: Option<usize>,
    ) -> Result<Self> {
        let (phi, sigma) = pod(snapshots, energy_cutoff, max_modes)?;
        let indices = deim_indices(&phi)?;
        let mut model = DeimModel::new(phi, indices)?;
        model.singular_values = sigma.iter().copied().collect();
        Ok(model)
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn n_modes(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_fine(&self) -> usize {
        self.phi.nrows()
    }

    /// Sample a full vector at the interpolation indices.
    pub fn sample(&self, f: &FieldVector) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| f[i]))
    }

    /// Reconstruct the full approximation Phi (P' Phi)^{-1} f_sampled.
    pub fn apply_sampled(&self, f_sampled: &DVector<f64>) -> FieldVector {
        let c = self.lu.solve(f_sampled).expect("checked invertible at build");
        &self.phi * c
    }

    /// Full-vector convenience: approximate f from its sampled entries.
    pub fn apply(&self, f: &FieldVector) -> FieldVector {
        self.apply_sampled(&self.sample(f))
    }

    /// Compose with a reduced operator: the stepper then evaluates the
    /// nonlinearity only at the sample rows and applies the r x m projector
    /// V' M Phi (P' Phi)^{-1}.
    pub fn bind(&self, op: &ReducedOperator) -> Result<SampledNonlinear> {
        if self.n_fine() != op.n_fine() {
            return Err(Error::config(format!(
                "DEIM modes have {} rows but the reduced basis has {}",
                self.n_fine(),
                op.n_fine()
            )));
        }
        let m = self.n_modes();
        let inv = DMatrix::from_fn(m, m, |r, c| self.phi[(self.indices[r], c)])
            .try_inverse()
            .ok_or_else(|| Error::numerical("deim", "interpolation matrix P' Phi is singular"))?;
        let projector = op.mv.transpose() * &self.phi * inv;
        let sampled_basis = DMatrix::from_fn(m, op.dim(), |r, c| op.basis[(self.indices[r], c)]);
        Ok(SampledNonlinear {
            indices: self.indices.clone(),
            sampled_basis,
            projector,
        })
    }
}

pub fn save_deim(model: &DeimModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("deim {} {}\n", model.n_fine(), model.n_modes()));
    out.push_str(&format!("provenance {}\n", model.provenance));
    let sig: Vec<String> = model.singular_values.iter().map(|v| format!("{v}")).collect();
    out.push_str(&format!("sigma {}\n", sig.join(" ")));
    let idx: Vec<String> = model.indices.iter().map(|i| i.to_string()).collect();
    out.push_str(&idx.join(" "));
    out.push('\n');
    for j in 0..model.n_modes() {
        let col: Vec<String> = model.phi.column(j).iter().map(|v| format!("{v}")).collect();
        out.push_str(&col.join(" "));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_deim(path: impl AsRef<Path>) -> Result<DeimModel> {
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
    if toks.len() != 3 || toks[0] != "deim" {
        return Err(perr(1, "expected header `deim n m`".into()));
    }
    let n: usize = toks[1].parse().map_err(|_| perr(1, "bad n".into()))?;
    let m: usize = toks[2].parse().map_err(|_| perr(1, "bad m".into()))?;
    let prov_line = lines.next().ok_or_else(|| perr(2, "missing provenance line".into()))?;
    let provenance = prov_line
        .strip_prefix("provenance")
        .ok_or_else(|| perr(2, "expected `provenance <tag>`".into()))?
        .trim()
        .to_string();
    let sig_line = lines.next().ok_or_else(|| perr(3, "missing sigma line".into()))?;
    let singular_values: Vec<f64> = sig_line
        .strip_prefix("sigma")
        .ok_or_else(|| perr(3, "expected `sigma <values>`".into()))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(3, format!("bad singular value `{t}`"))))
        .collect::<Result<_>>()?;
    let idx_line = lines.next().ok_or_else(|| perr(4, "missing index line".into()))?;
    let indices: Vec<usize> = idx_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(4, format!("bad index `{t}`"))))
        .collect::<Result<_>>()?;
    if indices.len() != m {
        return Err(perr(4, format!("expected {m} indices, found {}", indices.len())));
    }
    let mut phi = DMatrix::zeros(n, m);
    for j in 0..m {
        let line = lines.next().ok_or_else(|| perr(5 + j, "missing mode column".into()))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(5 + j, format!("bad value `{t}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(perr(5 + j, format!("column length {} != {n}", vals.len())));
        }
        phi.set_column(j, &DVector::from_vec(vals));
    }
    let mut model = DeimModel::new(phi, indices)?;
    model.singular_values = singular_values;
    model.provenance = provenance;
    Ok(model)
}
