//! Permutation-based diagnostics for supervised models: variable importance
//! measures that permute, condition, drop or relearn features, partial
//! dependence and ICE curves, and closed-form references for linear models.

pub mod bikeshare;
pub mod dataset;
pub mod effects;
pub mod error;
pub mod importance;
pub mod learners;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod synthgen;

pub use dataset::{Dataset, Features, Permutation};
pub use error::{Error, Result};
pub use importance::{ImportanceReport, Measure};
pub use learners::{Learner, Predictor};
pub use rng::SeededStream;
