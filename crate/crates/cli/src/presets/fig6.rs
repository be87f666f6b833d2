//! Spread of independently initialised networks over the unit square,
//! trained on the contour data.

use permdiag::dataset::Dataset;
use permdiag::effects::GridField;
use permdiag::learners::Predictor;
use rayon::prelude::*;

use super::fig4::{contour_data, field_resolution, mean_field, write_field, write_points};
use super::{fit, SeedLog};
use crate::bundle::Bundle;
use crate::config::{ExperimentConfig, LearnerKind};
use crate::error::{CliError, Context};

#[derive(Debug, Clone)]
pub struct Fig6Result {
    pub data: Dataset,
    pub field: GridField,
    pub seeds: SeedLog,
}

fn corner(x1: f64, x2: f64) -> bool {
    (x1 > 0.8 && x2 < 0.2) || (x1 < 0.2 && x2 > 0.8)
}

impl Fig6Result {
    /// Mean sd over the two off-diagonal corners and over `|x1 - x2| <= 0.1`.
    pub fn corner_and_band_sd(&self) -> (f64, f64) {
        let sd = |_: f64, _: f64, _: f64, s: f64| s;
        let c = self.field.average_where(corner, sd).unwrap_or(f64::NAN);
        let b = self.field.average_where(|a, b| (a - b).abs() <= 0.1, sd).unwrap_or(f64::NAN);
        (c, b)
    }
}

pub fn compute(cfg: &ExperimentConfig) -> Result<Fig6Result, CliError> {
    let mut seeds = SeedLog::default();
    let data = contour_data(cfg, &mut seeds)?;
    let fit_seeds: Vec<u64> = (0..cfg.reps_or(30, 100))
        .map(|r| seeds.derive(cfg.seed, r as u64, "contour/mlp").seed)
        .collect();
    let models: Vec<Box<dyn Predictor>> = fit_seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| fit(LearnerKind::Mlp, cfg, &data, seed).context(|| format!("contour network {r}")))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&dyn Predictor> = models.iter().map(|m| m.as_ref()).collect();
    let field = mean_field(&refs, &data, field_resolution(cfg))?;
    Ok(Fig6Result { data, field, seeds })
}

pub fn write(res: &Fig6Result, bundle: &mut Bundle) -> Result<(), CliError> {
    res.seeds.record(bundle);
    bundle.write_csv("training_data.csv", "input", |b| res.data.write_csv(b))?;
    write_field(&res.field, "network", bundle)?;
    write_points("training_points.csv", &res.field.training_points, bundle)?;
    let (c, b) = res.corner_and_band_sd();
    bundle.note("corner_sd", c.to_string());
    bundle.note("band_sd", b.to_string());
    Ok(())
}
