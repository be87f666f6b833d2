//! Configuration-driven experiment runner: one preset per study, each
//! writing CSV tables, SVG figures and a hashed manifest.

pub mod bundle;
pub mod config;
pub mod error;
pub mod presets;
pub mod svg;

pub use config::{ExperimentConfig, LearnerKind, Preset};
pub use error::CliError;
pub use presets::{run, RunSummary};
