//! Multiscale reduced-order solver for nonlinear parabolic equations on
//! high-contrast permeability fields.
//!
//! The pipeline: build structured fine/coarse meshes (`grid`), generate or
//! load a permeability field (`field`), assemble fine-grid operators (`fem`),
//! construct the multiscale offline space from local spectral problems
//! (`msbasis`), project onto it (`rom`), march in time with implicit Euler or
//! exponential time differencing (`stepper`), optionally enriching the space
//! online from local residuals (`online`) and hyper-reducing the nonlinear
//! term with POD/DEIM (`deim`). The `harness` module orchestrates experiment
//! runs and reporting; the `msrom` binary exposes them on the command line.

pub mod deim;
pub mod error;
pub mod fem;
pub mod field;
pub mod grid;
pub mod harness;
pub mod msbasis;
pub mod online;
pub mod rom;
pub mod stepper;

pub use error::{Error, Result};
