//! Time integration: implicit Euler with Picard iteration on the nonlinear
//! source, and exponential time differencing (ETD) that absorbs the stiff
//! reaction into a nodewise integrating factor.
//!
//! Both schemes solve the same linear system `(M + dt A) u = rhs` each step;
//! the fine stepper factors it once, the reduced stepper refactors the small
//! projected system whenever the basis changes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{BandedCholesky, CsrMatrix, FieldVector};
use crate::rom::ReducedOperator;

/// Largest magnitude allowed in the ETD exponent before clamping.
const EXP_CLAMP: f64 = 500.0;

/// Reaction term S(u) on the right-hand side of u_t - div(kappa grad u) = S(u).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reaction {
    None,
    /// Bistable source (u - u^3) / eps^2, or its negation with `flip_sign`.
    AllenCahn { eps: f64, flip_sign: bool },
    /// Linear source rate * u (for closed-form checks).
    Linear { rate: f64 },
}

impl Reaction {
    /// Pointwise source S(u).
    pub fn source(&self, u: f64) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::AllenCahn { eps, flip_sign } => {
                let s = (u - u * u * u) / (eps * eps);
                if flip_sign {
                    -s
                } else {
                    s
                }
            }
            Reaction::Linear { rate } => rate * u,
        }
    }

    /// Decay rate q(u) with S(u) = -q(u) * u; the removable singularity at
    /// u = 0 is handled analytically, never by division.
    pub fn decay_rate(&self, u: f64) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::AllenCahn { eps, flip_sign } => {
                let q = (u * u - 1.0) / (eps * eps);
                if flip_sign {
                    -q
                } else {
                    q
                }
            }
            Reaction::Linear { rate } => -rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Reaction::AllenCahn { eps, .. } if !(eps > 0.0) => Err(Error::config(format!(
                "reaction interface width must be positive, got {eps}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Nodewise source vector S(u).
pub fn nodewise_source(reaction: &Reaction, u: &FieldVector) -> FieldVector {
    u.map(|v| reaction.source(v))
}

/// Nodewise ETD update w = exp(-tau q(u)) u; returns the number of clamped
/// exponents (nonzero indicates the step left the stable regime).
pub fn nodewise_etd_weight(reaction: &Reaction, tau: f64, u: &FieldVector) -> (FieldVector, usize) {
    let mut clamped = 0usize;
    let w = u.map(|v| {
        let mut e = -tau * reaction.decay_rate(v);
        if e.abs() > EXP_CLAMP {
            clamped += 1;
            e = e.clamp(-EXP_CLAMP, EXP_CLAMP);
        }
        e.exp() * v
    });
    (w, clamped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImplicitEuler,
    Etd,
}

#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub reaction: Reaction,
    pub picard_tol: f64,
    pub picard_max: usize,
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::config(format!(
                "final time must be positive, got {}",
                self.t_end
            )));
        }
        if self.picard_max == 0 {
            return Err(Error::config("picard_max must be at least 1"));
        }
        self.reaction.validate()
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// Outcome of one time step.
#[derive(Debug, Clone)]
pub struct StepOutcome<V> {
    pub state: V,
    pub picard_iters: usize,
    pub clamped: usize,
}

/// Fine-grid stepper over interior DOFs with a pre-factored step matrix.
pub struct FineStepper {
    pub a: CsrMatrix,
    pub m: CsrMatrix,
    pub dt: f64,
    factor: BandedCholesky,
}

impl FineStepper {
    pub fn new(a: CsrMatrix, m: CsrMatrix, dt: f64) -> Result<Self> {
        let step_matrix = m.linear_combination(1.0, &a, dt);
        let factor = BandedCholesky::factor(&step_matrix)
            .map_err(|e| Error::numerical("stepper", format!("step matrix factorization failed: {e}")))?;
        Ok(FineStepper { a, m, dt, factor })
    }

    fn m_norm(&self, v: &FieldVector) -> f64 {
        self.m.quadratic_form(v).sqrt()
    }

    /// One implicit Euler step with Picard iteration on the source.
    /// `extra` is an additional nodal source (manufactured solutions).
    pub fn step_implicit_euler(
        &self,
        cfg: &StepperConfig,
        u_prev: &FieldVector,
        extra: Option<&FieldVector>,
    ) -> Result<StepOutcome<FieldVector>> {
        let base = {
            let mut b = self.m.matvec(u_prev);
            if let Some(g) = extra {
                b += self.m.matvec(g) * self.dt;
            }
            b
        };
        let mut u = u_prev.clone();
        let mut iters = 0;
        for k in 1..=cfg.picard_max {
            iters = k;
            let f = nodewise_source(&cfg.reaction, &u);
            let rhs = &base + self.m.matvec(&f) * self.dt;
            let u_next = self.factor.solve(&rhs);
            let delta = self.m_norm(&(&u_next - &u));
            let scale = self.m_norm(&u_next).max(1.0);
            u = u_next;
            if delta <= cfg.picard_tol * scale {
                break;
            }
            if k == cfg.picard_max {
                log::warn!(
                    "picard iteration hit max {} (last update {delta:.3e}, tol {:.3e})",
                    cfg.picard_max,
                    cfg.picard_tol * scale
                );
            }
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("stepper", "implicit Euler step produced non-finite values"));
        }
        Ok(StepOutcome {
            state: u,
            picard_iters: iters,
            clamped: 0,
        })
    }

    /// One ETD step: integrating-factor update then one linear solve.
    pub fn step_etd(
        &self,
        cfg: &StepperConfig,
        u_prev: &FieldVector,
        extra: Option<&FieldVector>,
    ) -> Result<StepOutcome<FieldVector>> {
        let (w, clamped) = nodewise_etd_weight(&cfg.reaction, self.dt, u_prev);
        let mut rhs = self.m.matvec(&w);
        if let Some(g) = extra {
            rhs += self.m.matvec(g) * self.dt;
        }
        let u = self.factor.solve(&rhs);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("stepper", "ETD step produced non-finite values"));
        }
        Ok(StepOutcome {
            state: u,
            picard_iters: 0,
            clamped,
        })
    }

    pub fn step(
        &self,
        cfg: &StepperConfig,
        u_prev: &FieldVector,
        extra: Option<&FieldVector>,
    ) -> Result<StepOutcome<FieldVector>> {
        match cfg.scheme {
            Scheme::ImplicitEuler => self.step_implicit_euler(cfg, u_prev, extra),
            Scheme::Etd => self.step_etd(cfg, u_prev, extra),
        }
    }
}

/// March the fine system from `u0` to `t_end`; the observer sees every
/// accepted step as (step index from 1, time, state, picard iterations).
pub fn simulate_fine(
    a: CsrMatrix,
    m: CsrMatrix,
    cfg: &StepperConfig,
    u0: FieldVector,
    mut observer: impl FnMut(usize, f64, &FieldVector, usize),
) -> Result<FieldVector> {
    cfg.validate()?;
    let stepper = FineStepper::new(a, m, cfg.dt)?;
    let mut u = u0;
    let mut total_clamped = 0usize;
    for n in 1..=cfg.n_steps() {
        let out = stepper.step(cfg, &u, None)?;
        u = out.state;
        total_clamped += out.clamped;
        observer(n, n as f64 * cfg.dt, &u, out.picard_iters);
    }
    if total_clamped > 0 {
        log::warn!("ETD exponent clamped at {total_clamped} node evaluations");
    }
    Ok(u)
}

/// Sampled evaluation of the nonlinearity (hyper-reduction): the reduced
/// right-hand side is `projector * f(sampled_basis * c)` instead of the full
/// `V' M f(V c)`.
#[derive(Debug, Clone)]
pub struct SampledNonlinear {
    /// Interior-DOF indices of the sample points.
    pub indices: Vec<usize>,
    /// Rows of the reduced basis at the sample points (m x r).
    pub sampled_basis: DMatrix<f64>,
    /// Precomposed projector V' M Phi (P' Phi)^{-1} (r x m).
    pub projector: DMatrix<f64>,
}

/// How the reduced stepper evaluates nonlinear nodewise terms.
#[derive(Clone, Copy)]
pub enum NonlinearHandler<'a> {
    /// Reconstruct the full fine vector and project exactly.
    Exact,
    /// Evaluate only at sample points and apply the fitted projector.
    Sampled(&'a SampledNonlinear),
}

/// Reduced-space stepper; rebuilt whenever the basis changes.
pub struct ReducedStepper {
    pub dt: f64,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl ReducedStepper {
    pub fn new(op: &ReducedOperator, dt: f64) -> Result<Self> {
        let step_matrix = &op.m_red + &op.a_red * dt;
        let factor = step_matrix.cholesky().ok_or_else(|| {
            Error::numerical("stepper", "reduced step matrix not positive definite")
        })?;
        Ok(ReducedStepper { dt, factor })
    }

    /// Reduced source term V' M f(V c), exactly or via sampling.
    fn source_rhs(
        &self,
        op: &ReducedOperator,
        handler: NonlinearHandler<'_>,
        reaction: &Reaction,
        c: &DVector<f64>,
    ) -> DVector<f64> {
        match handler {
            NonlinearHandler::Exact => {
                let u = op.reconstruct(c);
                op.mv.transpose() * nodewise_source(reaction, &u)
            }
            NonlinearHandler::Sampled(s) => {
                let u_s = &s.sampled_basis * c;
                &s.projector * nodewise_source(reaction, &u_s)
            }
        }
    }

    /// Reduced ETD term V' M w, exactly or via sampling.
    fn etd_rhs(
        &self,
        op: &ReducedOperator,
        handler: NonlinearHandler<'_>,
        reaction: &Reaction,
        c: &DVector<f64>,
    ) -> (DVector<f64>, usize) {
        match handler {
            NonlinearHandler::Exact => {
                let u = op.reconstruct(c);
                let (w, clamped) = nodewise_etd_weight(reaction, self.dt, &u);
                (op.mv.transpose() * w, clamped)
            }
            NonlinearHandler::Sampled(s) => {
                let u_s = &s.sampled_basis * c;
                let (w_s, clamped) = nodewise_etd_weight(reaction, self.dt, &u_s);
                (&s.projector * w_s, clamped)
            }
        }
    }

    /// Picard iteration for implicit Euler given the constant part of the
    /// right-hand side and a starting guess.
    fn picard(
        &self,
        op: &ReducedOperator,
        cfg: &StepperConfig,
        handler: NonlinearHandler<'_>,
        base: DVector<f64>,
        c0: DVector<f64>,
    ) -> StepOutcome<DVector<f64>> {
        let mut c = c0;
        let mut iters = 0;
        for k in 1..=cfg.picard_max {
            iters = k;
            let rhs = &base + self.source_rhs(op, handler, &cfg.reaction, &c) * self.dt;
            let c_next = self.factor.solve(&rhs);
            let dm = {
                let d = &c_next - &c;
                (&op.m_red * &d).dot(&d).max(0.0).sqrt()
            };
            let scale = (&op.m_red * &c_next).dot(&c_next).max(0.0).sqrt().max(1.0);
            c = c_next;
            if dm <= cfg.picard_tol * scale {
                break;
            }
            if k == cfg.picard_max {
                log::warn!(
                    "reduced picard iteration hit max {} (last update {dm:.3e})",
                    cfg.picard_max
                );
            }
        }
        StepOutcome {
            state: c,
            picard_iters: iters,
            clamped: 0,
        }
    }

    pub fn step(
        &self,
        op: &ReducedOperator,
        cfg: &StepperConfig,
        handler: NonlinearHandler<'_>,
        c_prev: &DVector<f64>,
        extra_reduced: Option<&DVector<f64>>,
    ) -> Result<StepOutcome<DVector<f64>>> {
        let out = match cfg.scheme {
            Scheme::ImplicitEuler => {
                let mut base = &op.m_red * c_prev;
                if let Some(g) = extra_reduced {
                    base += g * self.dt;
                }
                self.picard(op, cfg, handler, base, c_prev.clone())
            }
            Scheme::Etd => {
                let (mut rhs, clamped) = self.etd_rhs(op, handler, &cfg.reaction, c_prev);
                if let Some(g) = extra_reduced {
                    rhs += g * self.dt;
                }
                StepOutcome {
                    state: self.factor.solve(&rhs),
                    picard_iters: 0,
                    clamped,
                }
            }
        };
        if !out.state.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("stepper", "reduced step produced non-finite values"));
        }
        Ok(out)
    }

    /// Step where the previous state is a fine interior vector (used when the
    /// basis changed since the previous step, so its coordinates are stale).
    pub fn step_from_fine(
        &self,
        op: &ReducedOperator,
        cfg: &StepperConfig,
        handler: NonlinearHandler<'_>,
        u_prev: &FieldVector,
        extra_reduced: Option<&DVector<f64>>,
    ) -> Result<StepOutcome<DVector<f64>>> {
        let out = match cfg.scheme {
            Scheme::ImplicitEuler => {
                let mut base = op.mv.transpose() * u_prev;
                if let Some(g) = extra_reduced {
                    base += g * self.dt;
                }
                let c0 = op.l2_projection_coords(u_prev)?;
                self.picard(op, cfg, handler, base, c0)
            }
            Scheme::Etd => {
                // The integrating factor acts on the fine previous state,
                // exactly as in the unreduced scheme.
                let (mut rhs, clamped) = match handler {
                    NonlinearHandler::Exact => {
                        let (w, clamped) = nodewise_etd_weight(&cfg.reaction, self.dt, u_prev);
                        (op.mv.transpose() * w, clamped)
                    }
                    NonlinearHandler::Sampled(s) => {
                        let u_s = DVector::from_iterator(
                            s.indices.len(),
                            s.indices.iter().map(|&i| u_prev[i]),
                        );
                        let (w_s, clamped) = nodewise_etd_weight(&cfg.reaction, self.dt, &u_s);
                        (&s.projector * w_s, clamped)
                    }
                };
                if let Some(g) = extra_reduced {
                    rhs += g * self.dt;
                }
                StepOutcome {
                    state: self.factor.solve(&rhs),
                    picard_iters: 0,
                    clamped,
                }
            }
        };
        if !out.state.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("stepper", "reduced step produced non-finite values"));
        }
        Ok(out)
    }
}

/// March the reduced system without enrichment; the observer sees each step
/// as (step index from 1, time, coordinates, picard iterations).
pub fn simulate_reduced(
    op: &ReducedOperator,
    cfg: &StepperConfig,
    handler: NonlinearHandler<'_>,
    c0: DVector<f64>,
    mut observer: impl FnMut(usize, f64, &DVector<f64>, usize),
) -> Result<DVector<f64>> {
    cfg.validate()?;
    let stepper = ReducedStepper::new(op, cfg.dt)?;
    let mut c = c0;
    let mut total_clamped = 0usize;
    for n in 1..=cfg.n_steps() {
        let out = stepper.step(op, cfg, handler, &c, None)?;
        c = out.state;
        total_clamped += out.clamped;
        observer(n, n as f64 * cfg.dt, &c, out.picard_iters);
    }
    if total_clamped > 0 {
        log::warn!("ETD exponent clamped at {total_clamped} sample evaluations");
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{self, apply_dirichlet};
    use crate::field::PermeabilityField;
    use crate::grid::build_fine_mesh;
    use approx::assert_abs_diff_eq;

    fn scalar_system(lambda: f64) -> (CsrMatrix, CsrMatrix) {
        let m = CsrMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        let a = CsrMatrix::from_triplets(1, 1, &[(0, 0, lambda)]);
        (a, m)
    }

    fn cfg(scheme: Scheme, dt: f64, t_end: f64, reaction: Reaction) -> StepperConfig {
        StepperConfig {
            scheme,
            dt,
            t_end,
            reaction,
            picard_tol: 1e-8,
            picard_max: 50,
        }
    }

    #[test]
    fn implicit_euler_linear_closed_form() {
        // u' + lambda u = rate u has the per-step recursion
        // u_{n+1} = u_n / (1 + dt lambda - dt rate).
        let (a, m) = scalar_system(2.0);
        let c = cfg(Scheme::ImplicitEuler, 0.01, 0.05, Reaction::Linear { rate: 0.5 });
        let mut expected = 1.0;
        let u = simulate_fine(a, m, &c, DVector::from_vec(vec![1.0]), |_, _, u, _| {
            expected /= 1.0 + 0.01 * 2.0 - 0.01 * 0.5;
            assert_abs_diff_eq!(u[0], expected, epsilon = 1e-7);
        })
        .unwrap();
        assert_abs_diff_eq!(u[0], expected, epsilon = 1e-7);
    }

    fn rk4_scalar(reaction: &Reaction, lambda: f64, mut u: f64, t_end: f64, n: usize) -> f64 {
        let h = t_end / n as f64;
        let f = |u: f64| reaction.source(u) - lambda * u;
        for _ in 0..n {
            let k1 = f(u);
            let k2 = f(u + 0.5 * h * k1);
            let k3 = f(u + 0.5 * h * k2);
            let k4 = f(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        u
    }

    #[test]
    fn both_schemes_first_order_in_dt() {
        let reaction = Reaction::AllenCahn { eps: 0.3, flip_sign: false };
        let lambda = 1.0;
        let exact = rk4_scalar(&reaction, lambda, 0.4, 0.2, 200_000);
        for scheme in [Scheme::ImplicitEuler, Scheme::Etd] {
            let mut errs = Vec::new();
            for dt in [0.02, 0.01, 0.005] {
                let (a, m) = scalar_system(lambda);
                let c = cfg(scheme, dt, 0.2, reaction);
                let u = simulate_fine(a, m, &c, DVector::from_vec(vec![0.4]), |_, _, _, _| {}).unwrap();
                errs.push((u[0] - exact).abs());
            }
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log2();
                assert!(
                    (0.7..=1.3).contains(&order),
                    "{scheme:?}: observed order {order} from errors {errs:?}"
                );
            }
        }
    }

    #[test]
    fn etd_equals_implicit_euler_without_reaction() {
        let fine = build_fine_mesh(8, 8).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a_full = fem::assemble_stiffness(&fine, &kappa).unwrap();
        let m_full = fem::assemble_mass(&fine);
        let zero = FieldVector::zeros(fine.n_nodes());
        let (a, _, map) = apply_dirichlet(&a_full, &zero, &fine.boundary_nodes());
        let (m, _, _) = apply_dirichlet(&m_full, &zero, &fine.boundary_nodes());
        let u0 = FieldVector::from_fn(map.n(), |i, _| (i as f64 * 0.37).sin());
        let c_ie = cfg(Scheme::ImplicitEuler, 1e-3, 5e-3, Reaction::None);
        let c_etd = cfg(Scheme::Etd, 1e-3, 5e-3, Reaction::None);
        let u_ie = simulate_fine(a.clone(), m.clone(), &c_ie, u0.clone(), |_, _, _, _| {}).unwrap();
        let u_etd = simulate_fine(a, m, &c_etd, u0, |_, _, _, _| {}).unwrap();
        assert!((u_ie - u_etd).amax() < 1e-12);
    }

    #[test]
    fn allen_cahn_equilibria_are_fixed_points() {
        for val in [1.0, -1.0] {
            for scheme in [Scheme::ImplicitEuler, Scheme::Etd] {
                let (a, m) = scalar_system(0.0);
                let c = cfg(scheme, 1e-3, 1e-2, Reaction::AllenCahn { eps: 0.1, flip_sign: false });
                let u = simulate_fine(a, m, &c, DVector::from_vec(vec![val]), |_, _, _, _| {}).unwrap();
                assert_abs_diff_eq!(u[0], val, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn diffusion_decays_in_mass_norm() {
        let fine = build_fine_mesh(16, 16).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a_full = fem::assemble_stiffness(&fine, &kappa).unwrap();
        let m_full = fem::assemble_mass(&fine);
        let zero = FieldVector::zeros(fine.n_nodes());
        let (a, _, map) = apply_dirichlet(&a_full, &zero, &fine.boundary_nodes());
        let (m, _, _) = apply_dirichlet(&m_full, &zero, &fine.boundary_nodes());
        let u0 = FieldVector::from_fn(map.n(), |i, _| 1.0 + (i as f64 * 0.61).cos());
        let c = cfg(Scheme::ImplicitEuler, 1e-3, 2e-2, Reaction::None);
        let m_probe = m.clone();
        let mut prev = m_probe.quadratic_form(&u0).sqrt();
        simulate_fine(a, m, &c, u0, |_, _, u, _| {
            let now = m_probe.quadratic_form(u).sqrt();
            assert!(now <= prev + 1e-13, "mass norm grew: {prev} -> {now}");
            prev = now;
        })
        .unwrap();
    }

    #[test]
    fn etd_clamps_extreme_exponents() {
        let (a, m) = scalar_system(0.0);
        let c = cfg(
            Scheme::Etd,
            1.0,
            1.0,
            Reaction::AllenCahn { eps: 1e-4, flip_sign: true },
        );
        // flip_sign makes the exponent +tau(u^2-1)/eps^2, enormous here; the
        // clamp must keep the value finite.
        let u = simulate_fine(a, m, &c, DVector::from_vec(vec![2.0]), |_, _, _, _| {}).unwrap();
        assert!(u[0].is_finite());
    }

    #[test]
    fn reduced_full_rank_matches_fine() {
        let fine = build_fine_mesh(8, 8).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a_full = fem::assemble_stiffness(&fine, &kappa).unwrap();
        let m_full = fem::assemble_mass(&fine);
        let zero = FieldVector::zeros(fine.n_nodes());
        let (a, _, map) = apply_dirichlet(&a_full, &zero, &fine.boundary_nodes());
        let (m, _, _) = apply_dirichlet(&m_full, &zero, &fine.boundary_nodes());
        let n = map.n();
        let op = ReducedOperator::project(&a, &m, DMatrix::identity(n, n)).unwrap();
        let u0 = FieldVector::from_fn(n, |i, _| (i as f64 * 0.23).sin());
        for scheme in [Scheme::ImplicitEuler, Scheme::Etd] {
            let c = cfg(scheme, 1e-3, 5e-3, Reaction::AllenCahn { eps: 0.5, flip_sign: false });
            let u_fine =
                simulate_fine(a.clone(), m.clone(), &c, u0.clone(), |_, _, _, _| {}).unwrap();
            let coords = simulate_reduced(&op, &c, NonlinearHandler::Exact, u0.clone(), |_, _, _, _| {})
                .unwrap();
            let u_red = op.reconstruct(&coords);
            assert!(
                (&u_fine - &u_red).amax() < 1e-9,
                "{scheme:?} mismatch {}",
                (&u_fine - &u_red).amax()
            );
        }
    }

    #[test]
    fn sampled_handler_with_all_points_matches_exact() {
        // Sampling every node with the exact projector V' M reproduces the
        // exact nonlinear term.
        let fine = build_fine_mesh(6, 6).unwrap();
        let kappa = PermeabilityField::constant(&fine, 1.0);
        let a_full = fem::assemble_stiffness(&fine, &kappa).unwrap();
        let m_full = fem::assemble_mass(&fine);
        let zero = FieldVector::zeros(fine.n_nodes());
        let (a, _, map) = apply_dirichlet(&a_full, &zero, &fine.boundary_nodes());
        let (m, _, _) = apply_dirichlet(&m_full, &zero, &fine.boundary_nodes());
        let n = map.n();
        let basis = DMatrix::from_fn(n, 4, |i, j| ((i * (j + 2)) as f64 * 0.17).sin());
        let op = ReducedOperator::project(&a, &m, basis.clone()).unwrap();
        let sampled = SampledNonlinear {
            indices: (0..n).collect(),
            sampled_basis: basis,
            projector: op.mv.transpose().into_owned(),
        };
        let c0 = DVector::from_vec(vec![0.5, -0.2, 0.1, 0.3]);
        let c = cfg(Scheme::ImplicitEuler, 1e-3, 5e-3, Reaction::AllenCahn { eps: 0.4, flip_sign: false });
        let exact =
            simulate_reduced(&op, &c, NonlinearHandler::Exact, c0.clone(), |_, _, _, _| {}).unwrap();
        let via_sampling =
            simulate_reduced(&op, &c, NonlinearHandler::Sampled(&sampled), c0, |_, _, _, _| {})
                .unwrap();
        assert!((exact - via_sampling).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let c = cfg(Scheme::ImplicitEuler, 0.0, 1.0, Reaction::None);
        assert!(c.validate().is_err());
        let c = cfg(Scheme::Etd, 0.1, 1.0, Reaction::AllenCahn { eps: 0.0, flip_sign: false });
        assert!(c.validate().is_err());
    }
}
