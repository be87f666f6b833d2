//! Model families: least-squares linear regression, a bagged CART forest and
//! a single-hidden-layer perceptron, all behind [`Predictor`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Features};
use crate::error::{Error, Result};

pub mod forest;
pub mod linear;
pub mod mlp;

pub use forest::{fit_forest, ForestConfig, ForestModel, OobPredictions, Tree};
pub use linear::{fit_linear, least_squares, LinearModel};
pub use mlp::{fit_mlp, initial_params, MlpConfig, MlpModel, MlpObjective, TrainReport};

/// A fitted model with batch prediction. Prediction of row `i` depends only
/// on row `i`.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;

    fn predict(&self, x: &Features) -> Result<Vec<f64>>;

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        let x = Features::from_rows(&[row.to_vec()])?;
        Ok(self.predict(&x)?[0])
    }
}

pub(crate) fn check_width(expected: usize, x: &Features) -> Result<()> {
    if x.n_cols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: x.n_cols(),
        });
    }
    Ok(())
}

/// A fitting procedure, used by the refit-based importance measures.
pub trait Learner: Send + Sync {
    fn name(&self) -> &str;

    /// Fits on `d`. `seed` drives any internal randomness.
    fn fit_model(&self, d: &Dataset, seed: u64) -> Result<Box<dyn Predictor>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearLearner;

impl Learner for LinearLearner {
    fn name(&self) -> &str {
        "linear"
    }

    fn fit_model(&self, d: &Dataset, _seed: u64) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_linear(d)?))
    }
}

#[derive(Debug, Clone)]
pub struct ForestLearner(pub ForestConfig);

impl Learner for ForestLearner {
    fn name(&self) -> &str {
        "forest"
    }

    fn fit_model(&self, d: &Dataset, seed: u64) -> Result<Box<dyn Predictor>> {
        let cfg = ForestConfig {
            seed,
            ..self.0.clone()
        };
        Ok(Box::new(fit_forest(d, &cfg)?))
    }
}

#[derive(Debug, Clone)]
pub struct MlpLearner(pub MlpConfig);

impl Learner for MlpLearner {
    fn name(&self) -> &str {
        "mlp"
    }

    fn fit_model(&self, d: &Dataset, seed: u64) -> Result<Box<dyn Predictor>> {
        let cfg = MlpConfig {
            seed,
            ..self.0.clone()
        };
        Ok(Box::new(fit_mlp(d, &cfg)?))
    }
}

/// Self-describing saved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFile {
    Linear(LinearModel),
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&s)
    }

    fn inner(&self) -> &dyn Predictor {
        match self {
            ModelFile::Linear(m) => m,
            ModelFile::Forest(m) => m,
            ModelFile::Mlp(m) => m,
        }
    }
}

impl Predictor for ModelFile {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict(&self, x: &Features) -> Result<Vec<f64>> {
        self.inner().predict(x)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict(&self, x: &Features) -> Result<Vec<f64>> {
        (**self).predict(x)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict(&self, x: &Features) -> Result<Vec<f64>> {
        (**self).predict(x)
    }
}
