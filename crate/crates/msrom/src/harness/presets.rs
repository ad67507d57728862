//! Named experiment presets.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::harness::config::*;

fn base(fine: usize, coarse: usize, dt: f64, t_end: f64, epsilon: f64) -> ExperimentConfig {
    ExperimentConfig {
        mesh: MeshSection { fine, coarse },
        field: FieldSection {
            source: FieldSource::Generate,
            contrast: 1e4,
            seed: 8,
            path: None,
        },
        time: TimeSection {
            scheme: SchemeName::ImplicitEuler,
            dt,
            t_end,
            t_start: 0.0,
            picard_tol: 1e-8,
            picard_max: 50,
        },
        reaction: ReactionSection {
            kind: ReactionKind::AllenCahn,
            epsilon,
            flip_sign: false,
            rate: 0.0,
        },
        initial: InitialSection {
            kind: InitialKind::Product,
            value: 0.0,
        },
        basis: BasisSection { per_neighborhood: 2 },
        enrichment: EnrichmentSection {
            mode: EnrichModeName::Off,
            tol: 1e-3,
            theta: 0.7,
            max_levels: 3,
            dof_budget_per_step: None,
        },
        deim: DeimSection {
            enabled: false,
            source: SnapshotSource::SameEquation,
            energy_cutoff: 1.0 - 1e-8,
            max_modes: None,
            source_epsilon: 0.09,
            source_seed: 1,
            cadence: 1,
        },
        output: OutputSection {
            dir: PathBuf::from("out"),
            save_fields_at: vec![0.1],
            plots: true,
        },
    }
}

/// Known preset names; `preset --list` enumerates these.
pub const PRESET_NAMES: &[&str] = &[
    "desk",
    "ex21",
    "ex21-eps001",
    "ex22",
    "ex22-eps001",
    "ex33-same",
    "ex33-eps",
    "ex33-ic",
    "ex33-field",
    "ex33-window",
];

/// Documented experiment configurations.
///
/// `desk` is a small CI-speed setup (H = 1/8, h = 1/64). `ex21*` are the
/// offline-accuracy setups (H = 1/16, h = 1/256, one basis per neighborhood);
/// `ex22*` start from two basis per neighborhood (450 DOF) with accumulating
/// adaptive enrichment; `ex33-*` enable DEIM with the different snapshot
/// sources. The `-eps001` variants use the sharper interface width 0.01 (and
/// the finer time step 1e-4 that it requires).
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "desk" => base(64, 8, 1e-3, 0.1, 0.1),
        "ex21" => {
            let mut c = base(256, 16, 1e-3, 0.1, 0.1);
            c.basis.per_neighborhood = 1;
            c
        }
        "ex21-eps001" => {
            let mut c = base(256, 16, 1e-3, 0.1, 0.01);
            c.basis.per_neighborhood = 1;
            c
        }
        "ex22" => {
            let mut c = base(256, 16, 1e-3, 0.1, 0.1);
            c.enrichment.mode = EnrichModeName::Adaptive2;
            c.enrichment.tol = 1e-3;
            c
        }
        "ex22-eps001" => {
            let mut c = base(256, 16, 1e-4, 0.1, 0.01);
            c.enrichment.mode = EnrichModeName::Adaptive2;
            c.enrichment.tol = 1e-3;
            c
        }
        "ex33-same" | "ex33-eps" | "ex33-ic" | "ex33-field" | "ex33-window" => {
            let mut c = base(64, 8, 1e-3, 0.1, 0.1);
            c.time.scheme = SchemeName::Etd;
            c.deim.enabled = true;
            c.deim.source = match name {
                "ex33-same" => SnapshotSource::SameEquation,
                "ex33-eps" => SnapshotSource::DifferentEpsilon,
                "ex33-ic" => SnapshotSource::DifferentIc,
                "ex33-field" => SnapshotSource::DifferentField,
                _ => SnapshotSource::EarlierTimeWindow,
            };
            if name == "ex33-window" {
                c.time.t_start = 0.05;
                c.time.t_end = 0.06;
            }
            c
        }
        _ => {
            return Err(Error::config(format!(
                "unknown preset `{name}`; known presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    cfg.validate().expect("presets must be valid");
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_are_valid() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn documented_parameters() {
        assert_eq!(preset("ex21").unwrap().time.dt, 1e-3);
        assert_eq!(preset("ex21").unwrap().mesh.coarse, 16);
        assert_eq!(preset("ex21").unwrap().mesh.fine, 256);
        // 15 x 15 interior coarse nodes x 2 basis = 450 initial DOF.
        let ex22 = preset("ex22").unwrap();
        let n_nbhd = (ex22.mesh.coarse - 1) * (ex22.mesh.coarse - 1);
        assert_eq!(n_nbhd * ex22.basis.per_neighborhood, 450);
        // The sharp-interface variant uses the finer time step.
        assert_eq!(preset("ex22-eps001").unwrap().time.dt, 1e-4);
        assert_eq!(preset("ex22-eps001").unwrap().reaction.epsilon, 0.01);
    }

    #[test]
    fn unknown_preset_is_config_error() {
        assert!(preset("nope").is_err());
    }

    #[test]
    fn window_preset_is_a_continuation() {
        let c = preset("ex33-window").unwrap();
        assert_eq!(c.time.t_start, 0.05);
        assert_eq!(c.time.t_end, 0.06);
    }
}
