//! Experiment configuration: a sectioned TOML schema with strict parsing
//! (unknown keys are errors) and exact save/load round-tripping.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::online::{EnrichMode, EnrichmentPolicy};
use crate::stepper::{Reaction, Scheme, StepperConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Fine cells per axis; h = 1/fine.
    pub fine: usize,
    /// Coarse cells per axis; H = 1/coarse. Must divide `fine`.
    pub coarse: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    Generate,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub source: FieldSource,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default)]
    pub seed: u64,
    /// Field file, when source = "load".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_contrast() -> f64 {
    1e4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    ImplicitEuler,
    Etd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub scheme: SchemeName,
    pub dt: f64,
    pub t_end: f64,
    /// Start time; nonzero only for continuation windows.
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
}

fn default_picard_tol() -> f64 {
    1e-8
}

fn default_picard_max() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionKind {
    None,
    AllenCahn,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSection {
    pub kind: ReactionKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Flip the sign of the bistable source (reads the reaction as a decay
    /// term instead of a source term).
    #[serde(default)]
    pub flip_sign: bool,
    #[serde(default)]
    pub rate: f64,
}

fn default_epsilon() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// g(x, y) = 4 (0.5 - x)(0.5 - y).
    Product,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default)]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    /// Offline basis functions per neighborhood.
    pub per_neighborhood: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnrichModeName {
    Off,
    Uniform,
    Adaptive1,
    Adaptive2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichmentSection {
    pub mode: EnrichModeName,
    #[serde(default = "default_enrich_tol")]
    pub tol: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof_budget_per_step: Option<usize>,
}

fn default_enrich_tol() -> f64 {
    1e-3
}

fn default_theta() -> f64 {
    0.7
}

fn default_max_levels() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotSource {
    SameEquation,
    DifferentEpsilon,
    DifferentIc,
    DifferentField,
    EarlierTimeWindow,
}

impl SnapshotSource {
    pub fn tag(&self) -> &'static str {
        match self {
            SnapshotSource::SameEquation => "same_equation",
            SnapshotSource::DifferentEpsilon => "different_epsilon",
            SnapshotSource::DifferentIc => "different_ic",
            SnapshotSource::DifferentField => "different_field",
            SnapshotSource::EarlierTimeWindow => "earlier_time_window",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeimSection {
    pub enabled: bool,
    #[serde(default = "default_snapshot_source")]
    pub source: SnapshotSource,
    #[serde(default = "default_energy_cutoff")]
    pub energy_cutoff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_modes: Option<usize>,
    /// Epsilon of the source run when source = "different_epsilon".
    #[serde(default = "default_source_epsilon")]
    pub source_epsilon: f64,
    /// Field seed of the source run when source = "different_field".
    #[serde(default = "default_source_seed")]
    pub source_seed: u64,
    /// Keep every k-th snapshot.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
}

fn default_snapshot_source() -> SnapshotSource {
    SnapshotSource::SameEquation
}

fn default_energy_cutoff() -> f64 {
    1.0 - 1e-8
}

fn default_source_epsilon() -> f64 {
    0.09
}

fn default_source_seed() -> u64 {
    1
}

fn default_cadence() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Times at which fine and reduced solution snapshots are written.
    #[serde(default)]
    pub save_fields_at: Vec<f64>,
    #[serde(default = "default_true")]
    pub plots: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh: MeshSection,
    pub field: FieldSection,
    pub time: TimeSection,
    pub reaction: ReactionSection,
    pub initial: InitialSection,
    pub basis: BasisSection,
    pub enrichment: EnrichmentSection,
    pub deim: DeimSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mesh.fine < 2 || self.mesh.coarse < 2 {
            return Err(Error::config(format!(
                "mesh needs at least 2 cells per axis on both levels, got fine={} coarse={}",
                self.mesh.fine, self.mesh.coarse
            )));
        }
        if self.mesh.fine % self.mesh.coarse != 0 {
            return Err(Error::config(format!(
                "coarse cells ({}) must divide fine cells ({})",
                self.mesh.coarse, self.mesh.fine
            )));
        }
        if self.field.source == FieldSource::Load && self.field.path.is_none() {
            return Err(Error::config("field.source = \"load\" requires field.path"));
        }
        if self.field.source == FieldSource::Generate && !(self.field.contrast >= 1.0) {
            return Err(Error::config(format!(
                "field contrast must be >= 1, got {}",
                self.field.contrast
            )));
        }
        if self.basis.per_neighborhood == 0 {
            return Err(Error::config("basis.per_neighborhood must be at least 1"));
        }
        if !(self.time.t_start >= 0.0 && self.time.t_end > self.time.t_start) {
            return Err(Error::config(format!(
                "time window [{}, {}] is empty or negative",
                self.time.t_start, self.time.t_end
            )));
        }
        if self.deim.enabled && self.deim.cadence == 0 {
            return Err(Error::config("deim.cadence must be at least 1"));
        }
        if self.enrichment.mode != EnrichModeName::Off {
            self.enrichment_policy()
                .expect("mode checked")
                .validate()?;
        }
        self.stepper_config().validate()
    }

    pub fn scheme(&self) -> Scheme {
        match self.time.scheme {
            SchemeName::ImplicitEuler => Scheme::ImplicitEuler,
            SchemeName::Etd => Scheme::Etd,
        }
    }

    pub fn reaction(&self) -> Reaction {
        match self.reaction.kind {
            ReactionKind::None => Reaction::None,
            ReactionKind::AllenCahn => Reaction::AllenCahn {
                eps: self.reaction.epsilon,
                flip_sign: self.reaction.flip_sign,
            },
            ReactionKind::Linear => Reaction::Linear {
                rate: self.reaction.rate,
            },
        }
    }

    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            scheme: self.scheme(),
            dt: self.time.dt,
            t_end: self.time.t_end - self.time.t_start,
            reaction: self.reaction(),
            picard_tol: self.time.picard_tol,
            picard_max: self.time.picard_max,
        }
    }

    /// None when enrichment is off.
    pub fn enrichment_policy(&self) -> Option<EnrichmentPolicy> {
        let mode = match self.enrichment.mode {
            EnrichModeName::Off => return None,
            EnrichModeName::Uniform => EnrichMode::Uniform,
            EnrichModeName::Adaptive1 => EnrichMode::Adaptive1,
            EnrichModeName::Adaptive2 => EnrichMode::Adaptive2,
        };
        Some(EnrichmentPolicy {
            mode,
            tol: self.enrichment.tol,
            max_levels: self.enrichment.max_levels,
            theta: self.enrichment.theta,
            dof_budget_per_step: self.enrichment.dof_budget_per_step,
        })
    }

    pub fn initial_value(&self, x: f64, y: f64) -> f64 {
        match self.initial.kind {
            InitialKind::Product => 4.0 * (0.5 - x) * (0.5 - y),
            InitialKind::Constant => self.initial.value,
        }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_config(cfg: &ExperimentConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| Error::config(format!("cannot serialize config: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
