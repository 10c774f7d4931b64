//! Stochastic forward-backward-forward splitting for monotone inclusions.
//!
//! The core iteration lives in [`fbf`]; [`composite`] lifts primal-dual
//! problems onto it, [`diagnostics`] checks convergence certificates on the
//! recorded traces and [`runner`] drives seeded batches from TOML configs.

pub mod acceptance;
pub mod composite;
pub mod diagnostics;
pub mod error;
pub mod fbf;
pub mod operators;
pub mod runner;
pub mod space;
pub mod stochastic;

pub use error::{Error, Result};
pub use fbf::{run, FbfConfig, IterateTrace, StepRule};
pub use space::{Metric, MetricSequence, Vector};
pub use stochastic::{NoiseKind, NoiseTriple};
