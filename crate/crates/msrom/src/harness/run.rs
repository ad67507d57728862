//! Experiment orchestration: assemble operators, compute the fine reference
//! trajectory, build the offline space, optionally fit a DEIM model, march
//! the reduced solution (optionally with online enrichment), and write all
//! artifacts (CSV logs, field snapshots, SVG plots).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::deim::DeimModel;
use crate::error::{Error, Result};
use crate::fem::{self, apply_dirichlet, CsrMatrix, DofMap, FieldVector};
use crate::field::{self, PermeabilityField};
use crate::grid::{
    build_coarse_mesh, build_fine_mesh, neighborhood_indexing, CoarseMesh, FineMesh,
    NeighborhoodIndexing,
};
use crate::harness::config::{
    EnrichModeName, ExperimentConfig, FieldSource, SnapshotSource,
};
use crate::harness::metrics::relative_errors;
use crate::harness::plot::{write_line_plot, Series};
use crate::harness::report::{
    write_enrichment_csv, write_errors_csv, ErrorRecord, ErrorReport,
};
use crate::msbasis;
use crate::online::{enriched_step, EnrichMode, EnrichmentEvent, OnlineContext};
use crate::rom::ReducedOperator;
use crate::stepper::{
    nodewise_etd_weight, nodewise_source, FineStepper, NonlinearHandler, ReducedStepper, Scheme,
    StepperConfig,
};

/// Meshes, field and interior-DOF operators of one experiment.
pub struct Assembled {
    pub fine: FineMesh,
    pub coarse: CoarseMesh,
    pub idx: NeighborhoodIndexing,
    pub kappa: PermeabilityField,
    pub map: DofMap,
    /// Kappa-weighted stiffness over interior DOFs.
    pub a: CsrMatrix,
    /// Unit-coefficient stiffness over interior DOFs (energy-error norm).
    pub a_unit: CsrMatrix,
    /// Mass matrix over interior DOFs.
    pub m: CsrMatrix,
}

pub fn assemble(cfg: &ExperimentConfig) -> Result<Assembled> {
    let fine = build_fine_mesh(cfg.mesh.fine, cfg.mesh.fine)?;
    let coarse = build_coarse_mesh(&fine, cfg.mesh.coarse, cfg.mesh.coarse)?;
    let idx = neighborhood_indexing(&coarse);
    let kappa = load_or_generate_field(cfg, &fine, cfg.field.seed)?;
    let a_full = fem::assemble_stiffness(&fine, &kappa)?;
    let a_unit_full = fem::assemble_unit_stiffness(&fine);
    let m_full = fem::assemble_mass(&fine);
    let zero = FieldVector::zeros(fine.n_nodes());
    let boundary = fine.boundary_nodes();
    let (a, _, map) = apply_dirichlet(&a_full, &zero, &boundary);
    let (a_unit, _, _) = apply_dirichlet(&a_unit_full, &zero, &boundary);
    let (m, _, _) = apply_dirichlet(&m_full, &zero, &boundary);
    Ok(Assembled {
        fine,
        coarse,
        idx,
        kappa,
        map,
        a,
        a_unit,
        m,
    })
}

fn load_or_generate_field(
    cfg: &ExperimentConfig,
    fine: &FineMesh,
    seed: u64,
) -> Result<PermeabilityField> {
    match cfg.field.source {
        FieldSource::Generate => field::generate_channelized(fine, cfg.field.contrast, seed),
        FieldSource::Load => {
            let path = cfg.field.path.as_ref().expect("validated");
            let f = field::load_field(path)?;
            if !f.matches(fine) {
                return Err(Error::config(format!(
                    "field {} is {}x{} but the mesh is {}x{}",
                    path.display(),
                    f.nx,
                    f.ny,
                    fine.nx,
                    fine.ny
                )));
            }
            Ok(f)
        }
    }
}

/// Interior restriction of the configured initial condition.
pub fn initial_state(cfg: &ExperimentConfig, asm: &Assembled) -> FieldVector {
    nodal_interior(asm, |x, y| cfg.initial_value(x, y))
}

fn nodal_interior(asm: &Assembled, f: impl Fn(f64, f64) -> f64) -> FieldVector {
    let full = FieldVector::from_fn(asm.fine.n_nodes(), |id, _| {
        let (x, y) = asm.fine.node_xy(id);
        f(x, y)
    });
    asm.map.restrict(&full)
}

/// Fine trajectory over `n_steps` steps; optionally records the nodewise
/// nonlinearity (the DEIM snapshot quantity: the source term for implicit
/// Euler, the integrating-factor state for ETD).
pub fn fine_trajectory(
    asm: &Assembled,
    scfg: &StepperConfig,
    u0: &FieldVector,
    collect_nonlinear: bool,
) -> Result<(Vec<FieldVector>, Vec<usize>, Vec<FieldVector>)> {
    let stepper = FineStepper::new(asm.a.clone(), asm.m.clone(), scfg.dt)?;
    let mut states = Vec::with_capacity(scfg.n_steps());
    let mut iters = Vec::with_capacity(scfg.n_steps());
    let mut snaps = Vec::new();
    let mut u = u0.clone();
    for _ in 0..scfg.n_steps() {
        let prev = u.clone();
        let out = stepper.step(scfg, &u, None)?;
        u = out.state;
        if collect_nonlinear {
            snaps.push(match scfg.scheme {
                Scheme::ImplicitEuler => nodewise_source(&scfg.reaction, &u),
                Scheme::Etd => nodewise_etd_weight(&scfg.reaction, scfg.dt, &prev).0,
            });
        }
        iters.push(out.picard_iters);
        states.push(u.clone());
    }
    Ok((states, iters, snaps))
}

/// Nonlinearity snapshots along a reduced trajectory marched with the exact
/// nonlinear term: the source term at the accepted state for implicit Euler,
/// the integrating-factor state before the step for ETD (matching
/// `fine_trajectory`).
pub fn reduced_nonlinear_snapshots(
    op: &ReducedOperator,
    scfg: &StepperConfig,
    u0: &FieldVector,
) -> Result<Vec<FieldVector>> {
    let stepper = ReducedStepper::new(op, scfg.dt)?;
    let mut c = op.l2_projection_coords(u0)?;
    let mut snaps = Vec::with_capacity(scfg.n_steps());
    for _ in 0..scfg.n_steps() {
        let prev = op.reconstruct(&c);
        let out = stepper.step(op, scfg, NonlinearHandler::Exact, &c, None)?;
        c = out.state;
        snaps.push(match scfg.scheme {
            Scheme::ImplicitEuler => nodewise_source(&scfg.reaction, &op.reconstruct(&c)),
            Scheme::Etd => nodewise_etd_weight(&scfg.reaction, scfg.dt, &prev).0,
        });
    }
    Ok(snaps)
}

/// Nonlinearity snapshots for the configured DEIM source, recorded along a
/// reduced source run (the quantity the hyper-reduced stepper must
/// approximate is the reduced trajectory's nonlinearity, so a reduced source
/// run spans it far better than a fine one).
fn deim_snapshots(
    cfg: &ExperimentConfig,
    asm: &Assembled,
    scfg: &StepperConfig,
    op: &ReducedOperator,
    u_start: &FieldVector,
    g0: &FieldVector,
) -> Result<Vec<FieldVector>> {
    let snaps: Vec<FieldVector> = match cfg.deim.source {
        SnapshotSource::SameEquation => reduced_nonlinear_snapshots(op, scfg, u_start)?,
        SnapshotSource::DifferentEpsilon => {
            let mut alt = cfg.clone();
            alt.reaction.epsilon = cfg.deim.source_epsilon;
            let alt_scfg = StepperConfig {
                reaction: alt.reaction(),
                ..scfg.clone()
            };
            reduced_nonlinear_snapshots(op, &alt_scfg, u_start)?
        }
        SnapshotSource::DifferentIc => {
            let g = nodal_interior(asm, |x, y| {
                (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
            });
            reduced_nonlinear_snapshots(op, scfg, &g)?
        }
        SnapshotSource::DifferentField => {
            // The source run solves on its own permeability field with the
            // reduced space built from that field.
            let alt_kappa = load_or_generate_field(cfg, &asm.fine, cfg.deim.source_seed)?;
            let a_full = fem::assemble_stiffness(&asm.fine, &alt_kappa)?;
            let (a_alt, _, _) = apply_dirichlet(
                &a_full,
                &FieldVector::zeros(asm.fine.n_nodes()),
                &asm.fine.boundary_nodes(),
            );
            let pou = msbasis::build_partition_of_unity(&asm.fine, &asm.coarse, &alt_kappa)?;
            let offline = msbasis::build_offline_space(
                &asm.fine,
                &asm.coarse,
                &asm.idx,
                &alt_kappa,
                &pou,
                cfg.basis.per_neighborhood,
                &asm.map,
            )?;
            let alt_op = ReducedOperator::project(&a_alt, &asm.m, offline.basis)?;
            reduced_nonlinear_snapshots(&alt_op, scfg, u_start)?
        }
        SnapshotSource::EarlierTimeWindow => {
            if !(cfg.time.t_start > 0.0) {
                return Err(Error::config(
                    "earlier_time_window snapshots need time.t_start > 0",
                ));
            }
            let pre_cfg = StepperConfig {
                t_end: cfg.time.t_start,
                ..scfg.clone()
            };
            reduced_nonlinear_snapshots(op, &pre_cfg, g0)?
        }
    };
    let snaps: Vec<FieldVector> = snaps
        .into_iter()
        .step_by(cfg.deim.cadence.max(1))
        .collect();
    if snaps.is_empty() {
        return Err(Error::config("snapshot source produced an empty trajectory"));
    }
    Ok(snaps)
}

/// Write a nodal scalar field (solution snapshot) in the same text layout as
/// permeability files: header with grid dimensions, then rows of values.
pub fn save_nodal_field(fine: &FineMesh, full: &FieldVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (nx, ny) = (fine.nx + 1, fine.ny + 1);
    assert_eq!(full.len(), nx * ny);
    let mut out = format!("{nx} {ny}\n");
    for j in 0..ny {
        let row: Vec<String> = (0..nx).map(|i| format!("{}", full[j * nx + i])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_nodal_field(path: impl AsRef<Path>) -> Result<FieldVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::config(format!("{}: empty nodal field", path.display())))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().unwrap_or(0))
        .collect();
    if dims.len() != 2 || dims[0] == 0 || dims[1] == 0 {
        return Err(Error::config(format!(
            "{}: bad nodal field header `{header}`",
            path.display()
        )));
    }
    let mut values = Vec::with_capacity(dims[0] * dims[1]);
    for line in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::config(format!("{}: bad nodal value `{tok}`", path.display()))
            })?;
            values.push(v);
        }
    }
    if values.len() != dims[0] * dims[1] {
        return Err(Error::config(format!(
            "{}: expected {} values, found {}",
            path.display(),
            dims[0] * dims[1],
            values.len()
        )));
    }
    Ok(FieldVector::from_vec(values))
}

/// Everything a finished run exposes to callers and tests.
pub struct RunOutput {
    pub report: ErrorReport,
    pub events: Vec<EnrichmentEvent>,
    pub offline_dim: usize,
    pub final_fine: FieldVector,
    pub final_reduced: FieldVector,
    pub assembled: Assembled,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.deim.enabled && cfg.enrichment.mode != EnrichModeName::Off {
        return Err(Error::config(
            "online enrichment and DEIM hyper-reduction cannot be combined in one run",
        ));
    }
    let out_dir = &cfg.output.dir;
    let fields_dir = out_dir.join("fields");
    let plots_dir = out_dir.join("plots");
    fs::create_dir_all(&fields_dir).map_err(|e| Error::io(&fields_dir, e))?;
    if cfg.output.plots {
        fs::create_dir_all(&plots_dir).map_err(|e| Error::io(&plots_dir, e))?;
    }

    let asm = assemble(cfg)?;
    let scfg = cfg.stepper_config();
    let g0 = initial_state(cfg, &asm);

    // Continuation prelude: march the fine solution to t_start.
    let u_start = if cfg.time.t_start > 0.0 {
        let pre_cfg = StepperConfig {
            t_end: cfg.time.t_start,
            ..scfg.clone()
        };
        let (states, _, _) = fine_trajectory(&asm, &pre_cfg, &g0, false)?;
        states.last().cloned().unwrap_or(g0.clone())
    } else {
        g0.clone()
    };

    let (fine_states, _, _) = fine_trajectory(&asm, &scfg, &u_start, false)?;

    let pou = msbasis::build_partition_of_unity(&asm.fine, &asm.coarse, &asm.kappa)?;
    let offline = msbasis::build_offline_space(
        &asm.fine,
        &asm.coarse,
        &asm.idx,
        &asm.kappa,
        &pou,
        cfg.basis.per_neighborhood,
        &asm.map,
    )?;
    let mut op = ReducedOperator::project(&asm.a, &asm.m, offline.basis.clone())?;
    let offline_dim = op.dim();

    let deim_bound = if cfg.deim.enabled {
        let snaps = deim_snapshots(cfg, &asm, &scfg, &op, &u_start, &g0)?;
        let mat = DMatrix::from_fn(asm.map.n(), snaps.len(), |r, c| snaps[c][r]);
        let model = DeimModel::build(&mat, cfg.deim.energy_cutoff, cfg.deim.max_modes)?
            .with_provenance(cfg.deim.source.tag());
        crate::deim::save_deim(&model, out_dir.join("deim.txt"))?;
        Some(model.bind(&op)?)
    } else {
        None
    };
    let handler = match &deim_bound {
        Some(s) => NonlinearHandler::Sampled(s),
        None => NonlinearHandler::Exact,
    };

    let policy = cfg.enrichment_policy();
    let n_steps = scfg.n_steps();
    let mut records = Vec::with_capacity(n_steps);
    let mut events: Vec<EnrichmentEvent> = Vec::new();
    let mut u_red = op.reconstruct(&op.l2_projection_coords(&u_start)?);
    let snapshot_times = &cfg.output.save_fields_at;

    match policy {
        None => {
            let stepper = ReducedStepper::new(&op, scfg.dt)?;
            let mut c = op.l2_projection_coords(&u_start)?;
            for n in 1..=n_steps {
                let out = stepper.step(&op, &scfg, handler, &c, None)?;
                c = out.state;
                u_red = op.reconstruct(&c);
                push_record(
                    cfg,
                    &asm,
                    &mut records,
                    n,
                    &fine_states[n - 1],
                    &u_red,
                    op.dim(),
                    out.picard_iters,
                    snapshot_times,
                    &fields_dir,
                )?;
            }
        }
        Some(policy) => {
            let ctx = OnlineContext::new(&asm.fine, &asm.coarse, &asm.idx, &asm.a, &asm.map)?;
            let mut u_prev = u_start.clone();
            for n in 1..=n_steps {
                let res = enriched_step(
                    &ctx, &policy, &mut op, &asm.a, &asm.m, &scfg, &u_prev, n,
                )?;
                let live_dof = op.dim();
                events.extend(res.events);
                u_red = res.u;
                u_prev = u_red.clone();
                push_record(
                    cfg,
                    &asm,
                    &mut records,
                    n,
                    &fine_states[n - 1],
                    &u_red,
                    live_dof,
                    res.picard_iters,
                    snapshot_times,
                    &fields_dir,
                )?;
                if policy.mode != EnrichMode::Adaptive2 {
                    op.truncate(offline_dim);
                }
            }
        }
    }

    let report = ErrorReport { records };
    write_errors_csv(&report, out_dir.join("errors.csv"))?;
    write_enrichment_csv(&events, out_dir.join("enrichment.csv"))?;
    if cfg.output.plots {
        let times: Vec<f64> = report.records.iter().map(|r| r.t).collect();
        write_line_plot(
            plots_dir.join("errors.svg"),
            "relative error vs time",
            "t",
            "relative error",
            &[
                Series {
                    name: "e_a".into(),
                    points: times
                        .iter()
                        .zip(&report.records)
                        .map(|(&t, r)| (t, r.e_a))
                        .collect(),
                },
                Series {
                    name: "e_2".into(),
                    points: times
                        .iter()
                        .zip(&report.records)
                        .map(|(&t, r)| (t, r.e_2))
                        .collect(),
                },
            ],
        )?;
        write_line_plot(
            plots_dir.join("dof.svg"),
            "reduced dimension vs time",
            "t",
            "DOF",
            &[Series {
                name: "dof".into(),
                points: times
                    .iter()
                    .zip(&report.records)
                    .map(|(&t, r)| (t, r.dof as f64))
                    .collect(),
            }],
        )?;
    }

    let final_fine = fine_states.last().cloned().unwrap_or(u_start);
    Ok(RunOutput {
        report,
        events,
        offline_dim,
        final_fine,
        final_reduced: u_red,
        assembled: asm,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_record(
    cfg: &ExperimentConfig,
    asm: &Assembled,
    records: &mut Vec<ErrorRecord>,
    n: usize,
    u_fine: &FieldVector,
    u_red: &FieldVector,
    dof: usize,
    picard_iters: usize,
    snapshot_times: &[f64],
    fields_dir: &Path,
) -> Result<()> {
    let t = cfg.time.t_start + n as f64 * cfg.time.dt;
    let metrics = relative_errors(&asm.a_unit, &asm.m, u_fine, u_red);
    records.push(ErrorRecord {
        n,
        t,
        e_a: metrics.e_a,
        e_2: metrics.e_2,
        dof,
        picard_iters,
    });
    for &ts in snapshot_times {
        if (t - ts).abs() < 0.5 * cfg.time.dt {
            let tag = format!("{ts}").replace('.', "p");
            save_nodal_field(
                &asm.fine,
                &asm.map.extend(u_fine),
                fields_dir.join(format!("fine_t{tag}.txt")),
            )?;
            save_nodal_field(
                &asm.fine,
                &asm.map.extend(u_red),
                fields_dir.join(format!("reduced_t{tag}.txt")),
            )?;
        }
    }
    Ok(())
}
