//! Residual-driven online enrichment of the reduced space.
//!
//! After each tentative reduced step, the equation residual is measured per
//! coarse neighborhood in the dual of the local kappa-energy space; where it
//! is large, the Riesz representative of the local residual functional is
//! added to the basis and the step is re-solved.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{BandedCholesky, CsrMatrix, DofMap, FieldVector};
use crate::grid::{CoarseMesh, FineMesh, NeighborhoodIndexing};
use crate::rom::ReducedOperator;
use crate::stepper::{
    nodewise_etd_weight, nodewise_source, NonlinearHandler, ReducedStepper, Scheme, StepperConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnrichMode {
    /// Enrich every neighborhood each level.
    Uniform,
    /// Residual-selected neighborhoods; online columns are discarded after
    /// the step.
    Adaptive1,
    /// Residual-selected neighborhoods; online columns accumulate and
    /// enrichment is skipped while the aggregate residual stays below `tol`.
    Adaptive2,
}

#[derive(Debug, Clone)]
pub struct EnrichmentPolicy {
    pub mode: EnrichMode,
    /// Aggregate residual norm below which no enrichment happens.
    pub tol: f64,
    /// Maximum enrichment levels (re-solves) per time step.
    pub max_levels: usize,
    /// Bulk fraction of the squared residual targeted per level.
    pub theta: f64,
    /// Optional cap on basis columns added per time step.
    pub dof_budget_per_step: Option<usize>,
}

impl EnrichmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::config(format!(
                "enrichment fraction theta must be in (0, 1], got {}",
                self.theta
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::config(format!(
                "enrichment tolerance must be non-negative, got {}",
                self.tol
            )));
        }
        if self.max_levels == 0 {
            return Err(Error::config("max_levels must be at least 1"));
        }
        Ok(())
    }
}

/// Per-run cache: for every neighborhood, the interior-DOF positions of its
/// strictly interior nodes and the factorization of the kappa-stiffness
/// restricted there.
pub struct OnlineContext {
    coarse: CoarseMesh,
    nbhd_dofs: Vec<Vec<usize>>,
    factors: Vec<BandedCholesky>,
}

impl OnlineContext {
    pub fn new(
        fine: &FineMesh,
        coarse: &CoarseMesh,
        idx: &NeighborhoodIndexing,
        a: &CsrMatrix,
        map: &DofMap,
    ) -> Result<Self> {
        let mut nbhd_dofs = Vec::with_capacity(idx.per_nbhd.len());
        let mut factors = Vec::with_capacity(idx.per_nbhd.len());
        for dofs in &idx.per_nbhd {
            let mut positions = Vec::new();
            for &iloc in &dofs.interior_local {
                let node = dofs.nodes[iloc];
                let (i, j) = fine.node_ij(node);
                debug_assert!(!dofs.patch.on_boundary(i, j));
                if let Some(p) = map.pos(node) {
                    positions.push(p);
                }
            }
            let local = a.restrict(&positions);
            let factor = BandedCholesky::factor(&local).map_err(|e| {
                Error::numerical("online", format!("local stiffness factorization failed: {e}"))
            })?;
            nbhd_dofs.push(positions);
            factors.push(factor);
        }
        Ok(OnlineContext {
            coarse: coarse.clone(),
            nbhd_dofs,
            factors,
        })
    }

    pub fn n_neighborhoods(&self) -> usize {
        self.nbhd_dofs.len()
    }

    /// Riesz representative of the residual functional on neighborhood `k`
    /// (in local coordinates) and its dual norm sqrt(r' phi).
    pub fn riesz(&self, k: usize, residual: &FieldVector) -> (DVector<f64>, f64) {
        let dofs = &self.nbhd_dofs[k];
        let r_loc = DVector::from_iterator(dofs.len(), dofs.iter().map(|&p| residual[p]));
        let phi = self.factors[k].solve(&r_loc);
        let norm = r_loc.dot(&phi).max(0.0).sqrt();
        (phi, norm)
    }

    /// Scatter a local vector of neighborhood `k` into a global interior
    /// vector.
    pub fn scatter(&self, k: usize, local: &DVector<f64>, n_interior: usize) -> FieldVector {
        let mut g = FieldVector::zeros(n_interior);
        for (q, &p) in self.nbhd_dofs[k].iter().enumerate() {
            g[p] = local[q];
        }
        g
    }

    /// Dual norms of the residual on every neighborhood.
    pub fn residual_norms(&self, residual: &FieldVector) -> Vec<f64> {
        (0..self.n_neighborhoods())
            .map(|k| self.riesz(k, residual).1)
            .collect()
    }
}

/// Residual of the time-discrete equation at the tentative solution `u`,
/// as a functional over interior fine DOFs. For implicit Euler this is
/// M (u_prev - u)/tau + M S(u) - A u; for ETD the integrating-factor state
/// w replaces u_prev and the source is already absorbed into w.
pub fn global_residual(
    a: &CsrMatrix,
    m: &CsrMatrix,
    cfg: &StepperConfig,
    u_prev: &FieldVector,
    u: &FieldVector,
    extra: Option<&FieldVector>,
) -> FieldVector {
    let tau = cfg.dt;
    let mut r = match cfg.scheme {
        Scheme::ImplicitEuler => {
            let f = nodewise_source(&cfg.reaction, u);
            m.matvec(&(u_prev - u)) / tau + m.matvec(&f) - a.matvec(u)
        }
        Scheme::Etd => {
            let (w, _) = nodewise_etd_weight(&cfg.reaction, tau, u_prev);
            m.matvec(&(w - u)) / tau - a.matvec(u)
        }
    };
    if let Some(g) = extra {
        r += m.matvec(g);
    }
    r
}

/// Bulk selection: the smallest set of neighborhoods, taken in descending
/// residual order, whose squared norms reach `theta^2` of the total, then
/// thinned greedily so no two selected neighborhoods overlap (the rest wait
/// for the next level).
pub(crate) fn select_neighborhoods(
    norms: &[f64],
    theta: f64,
    overlap: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let total_sq: f64 = norms.iter().map(|n| n * n).sum();
    if total_sq == 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut prefix = Vec::new();
    let mut acc = 0.0;
    for &k in &order {
        if acc >= theta * theta * total_sq {
            break;
        }
        prefix.push(k);
        acc += norms[k] * norms[k];
    }
    let mut selected: Vec<usize> = Vec::new();
    for &k in &prefix {
        if selected.iter().all(|&s| !overlap(s, k)) {
            selected.push(k);
        }
    }
    selected
}

#[derive(Debug, Clone)]
pub struct EnrichmentEvent {
    pub step: usize,
    pub level: usize,
    pub neighborhood: usize,
    pub residual_norm: f64,
    pub added: usize,
    pub dof_after: usize,
}

#[derive(Debug)]
pub struct EnrichedStepResult {
    pub coords: DVector<f64>,
    pub u: FieldVector,
    pub picard_iters: usize,
    pub events: Vec<EnrichmentEvent>,
    /// Aggregate residual before any enrichment this step.
    pub initial_residual: f64,
    /// Aggregate residual at the accepted solution.
    pub final_residual: f64,
    /// True when enrichment was skipped because the residual was already
    /// below tolerance.
    pub skipped: bool,
}

fn aggregate(norms: &[f64]) -> f64 {
    norms.iter().map(|n| n * n).sum::<f64>().sqrt()
}

/// Append a column to the operator after kappa-energy orthogonalization
/// against the current basis; returns false when the column is numerically
/// dependent and was dropped.
fn append_orthogonalized(
    op: &mut ReducedOperator,
    a: &CsrMatrix,
    m: &CsrMatrix,
    mut col: FieldVector,
) -> Result<bool> {
    let norm0 = a.quadratic_form(&col).sqrt();
    if norm0 == 0.0 {
        return Ok(false);
    }
    // A-orthogonal projection onto the span: coefficients solve
    // (V' A V) x = V' A col.
    let rhs = op.av.transpose() * &col;
    let chol = op
        .a_red
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("online", "projected stiffness lost positive definiteness"))?;
    let x = chol.solve(&rhs);
    col -= &op.basis * x;
    let norm = a.quadratic_form(&col).sqrt();
    if norm <= 1e-8 * norm0 {
        log::warn!("online column nearly dependent on current basis; dropped");
        return Ok(false);
    }
    col /= norm;
    let cols = nalgebra::DMatrix::from_column_slice(col.len(), 1, col.as_slice());
    op.append_columns(a, m, &cols);
    Ok(true)
}

/// One time step with online enrichment. Solves the reduced step, measures
/// local residuals, enriches where warranted, and re-solves, up to
/// `max_levels` times. Online columns stay in `op`; discarding them between
/// steps (methods that do not accumulate) is the caller's choice via
/// `ReducedOperator::truncate`.
#[allow(clippy::too_many_arguments)]
pub fn enriched_step(
    ctx: &OnlineContext,
    policy: &EnrichmentPolicy,
    op: &mut ReducedOperator,
    a: &CsrMatrix,
    m: &CsrMatrix,
    cfg: &StepperConfig,
    u_prev: &FieldVector,
    step_index: usize,
) -> Result<EnrichedStepResult> {
    policy.validate()?;
    let n_interior = op.n_fine();
    let solve = |op: &ReducedOperator| -> Result<(DVector<f64>, FieldVector, usize)> {
        let stepper = ReducedStepper::new(op, cfg.dt)?;
        let out = stepper.step_from_fine(op, cfg, NonlinearHandler::Exact, u_prev, None)?;
        let u = op.reconstruct(&out.state);
        Ok((out.state, u, out.picard_iters))
    };
    let (mut coords, mut u, mut iters) = solve(op)?;
    let mut residual = global_residual(a, m, cfg, u_prev, &u, None);
    let mut norms = ctx.residual_norms(&residual);
    let initial_residual = aggregate(&norms);
    let mut current = initial_residual;
    let mut events = Vec::new();
    let mut added_total = 0usize;

    if policy.mode == EnrichMode::Adaptive2 && current <= policy.tol {
        return Ok(EnrichedStepResult {
            coords,
            u,
            picard_iters: iters,
            events,
            initial_residual,
            final_residual: current,
            skipped: true,
        });
    }

    for level in 1..=policy.max_levels {
        if current <= policy.tol {
            break;
        }
        let budget_left = policy
            .dof_budget_per_step
            .map(|b| b.saturating_sub(added_total))
            .unwrap_or(usize::MAX);
        if budget_left == 0 {
            break;
        }
        let mut selected = match policy.mode {
            EnrichMode::Uniform => (0..ctx.n_neighborhoods()).collect::<Vec<_>>(),
            _ => select_neighborhoods(&norms, policy.theta, |x, y| {
                ctx.coarse.neighborhoods_overlap(x, y)
            }),
        };
        selected.truncate(budget_left);
        if selected.is_empty() {
            break;
        }
        let mut any_added = false;
        for &k in &selected {
            let (phi_local, norm_k) = ctx.riesz(k, &residual);
            let col = ctx.scatter(k, &phi_local, n_interior);
            let added = append_orthogonalized(op, a, m, col)?;
            if added {
                added_total += 1;
                any_added = true;
            }
            events.push(EnrichmentEvent {
                step: step_index,
                level,
                neighborhood: k,
                residual_norm: norm_k,
                added: usize::from(added),
                dof_after: op.dim(),
            });
        }
        if !any_added {
            break;
        }
        let (c2, u2, it2) = solve(op)?;
        coords = c2;
        u = u2;
        iters = it2;
        residual = global_residual(a, m, cfg, u_prev, &u, None);
        norms = ctx.residual_norms(&residual);
        current = aggregate(&norms);
    }

    Ok(EnrichedStepResult {
        coords,
        u,
        picard_iters: iters,
        events,
        initial_residual,
        final_residual: current,
        skipped: false,
    })
}
