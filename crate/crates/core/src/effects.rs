//! Partial dependence, ICE curves with data-support masks, and 2-D
//! prediction fields over ensembles of models.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Features};
use crate::error::{Error, Result};
use crate::learners::Predictor;
use crate::synthgen::CopulaLaw;

/// Number of curve grid points used when none is given.
pub const DEFAULT_CURVE_POINTS: usize = 21;
/// Per-axis resolution of prediction fields used when none is given.
pub const DEFAULT_FIELD_POINTS: usize = 101;

/// `k` equispaced points from `lo` to `hi`, endpoints exact.
pub fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..k)
            .map(|i| {
                if i == k - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (k - 1) as f64
                }
            })
            .collect(),
    }
}

/// Default 21-point grid on [0, 1].
pub fn default_grid() -> Vec<f64> {
    linspace(0.0, 1.0, DEFAULT_CURVE_POINTS)
}

/// Range of values of feature `j` consistent with the rest of a row.
pub trait SupportRange: Sync {
    /// `None` when no conditional law is known for `j`.
    fn range(&self, row: &[f64], j: usize) -> Option<(f64, f64)>;
}

/// Support from the copula design: `k` latent conditional standard
/// deviations for pair members, unrestricted for everything else.
#[derive(Debug, Clone, Copy)]
pub struct CopulaSupport {
    pub law: CopulaLaw,
    pub k: f64,
}

impl CopulaSupport {
    pub fn new(law: CopulaLaw) -> Self {
        Self { law, k: 2.0 }
    }
}

impl SupportRange for CopulaSupport {
    fn range(&self, row: &[f64], j: usize) -> Option<(f64, f64)> {
        if j >= self.law.spec.p {
            return None;
        }
        if self.law.spec.partner(j).is_none() {
            return Some((f64::NEG_INFINITY, f64::INFINITY));
        }
        // rho = +-1 has no interval; treat as unknown
        self.law.support(row, j, self.k).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    PartialDependence,
    Ice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub kind: CurveKind,
    pub feature: usize,
    pub grid: Vec<f64>,
    /// PD: a single row. ICE: one row per entry of `row_ids`.
    pub values: Vec<Vec<f64>>,
    /// Same shape as `values`; all true when no support was requested.
    pub support: Vec<Vec<bool>>,
    pub row_ids: Vec<usize>,
    pub warnings: Vec<String>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("grid".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("grid must be strictly ascending".into()));
    }
    Ok(())
}

fn check_model(model: &dyn Predictor, x: &Features, j: usize) -> Result<()> {
    if model.n_features() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: x.n_cols(),
        });
    }
    if j >= x.n_cols() {
        return Err(Error::FeatureOutOfRange {
            index: j,
            width: x.n_cols(),
        });
    }
    Ok(())
}

/// Predictions with column `j` fixed at each grid value: `out[g][row]`.
fn sweep(model: &dyn Predictor, x: &Features, j: usize, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    grid.par_iter()
        .map(|&g| model.predict(&x.set_column(j, g)?))
        .collect()
}

/// `PD(x) = mean_i f(x_i with entry j set to x)` over every row of `d`.
pub fn partial_dependence(model: &dyn Predictor, d: &Dataset, j: usize, grid: &[f64]) -> Result<EffectCurve> {
    check_grid(grid)?;
    check_model(model, d.features(), j)?;
    let n = d.n_rows() as f64;
    let pd = sweep(model, d.features(), j, grid)?
        .into_iter()
        .map(|p| p.iter().sum::<f64>() / n)
        .collect();
    Ok(EffectCurve {
        kind: CurveKind::PartialDependence,
        feature: j,
        grid: grid.to_vec(),
        values: vec![pd],
        support: vec![vec![true; grid.len()]],
        row_ids: Vec::new(),
        warnings: Vec::new(),
    })
}

/// ICE curves for `rows` of `d`, optionally masked by `support`.
pub fn ice_curves(
    model: &dyn Predictor,
    d: &Dataset,
    rows: &[usize],
    j: usize,
    grid: &[f64],
    support: Option<&dyn SupportRange>,
) -> Result<EffectCurve> {
    check_grid(grid)?;
    check_model(model, d.features(), j)?;
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no ICE rows".into()));
    }
    let sub = d.features().select_rows(rows)?;
    let by_grid = sweep(model, &sub, j, grid)?;
    let values: Vec<Vec<f64>> = (0..rows.len())
        .map(|r| by_grid.iter().map(|g| g[r]).collect())
        .collect();
    let (mask, warnings) = support_mask(&sub, j, grid, support);
    Ok(EffectCurve {
        kind: CurveKind::Ice,
        feature: j,
        grid: grid.to_vec(),
        values,
        support: mask,
        row_ids: rows.to_vec(),
        warnings,
    })
}

/// Per-row flags marking grid values inside the support of feature `j`
/// given the rest of each row of `x`. Rows with no known law stay all true
/// and produce one warning.
pub fn support_mask(
    x: &Features,
    j: usize,
    grid: &[f64],
    support: Option<&dyn SupportRange>,
) -> (Vec<Vec<bool>>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut mask = vec![vec![true; grid.len()]; x.n_rows()];
    if let Some(s) = support {
        let mut missing = false;
        for (r, m) in mask.iter_mut().enumerate() {
            match s.range(&x.row(r), j) {
                Some((lo, hi)) => {
                    for (flag, &g) in m.iter_mut().zip(grid) {
                        *flag = g >= lo && g <= hi;
                    }
                }
                None => missing = true,
            }
        }
        if missing {
            let msg = format!("no conditional law for feature {j}; support mask left all true");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    (mask, warnings)
}

impl EffectCurve {
    /// Feature-wise mean of the curves (PD from ICE).
    pub fn mean_curve(&self) -> Vec<f64> {
        let k = self.values.len() as f64;
        (0..self.grid.len())
            .map(|g| self.values.iter().map(|v| v[g]).sum::<f64>() / k)
            .collect()
    }

    /// CSV with columns `row_id, grid_value, prediction, supported`;
    /// `row_id` is empty for partial dependence.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["row_id", "grid_value", "prediction", "supported"])?;
        for (r, vals) in self.values.iter().enumerate() {
            let id = match self.kind {
                CurveKind::PartialDependence => String::new(),
                CurveKind::Ice => self.row_ids[r].to_string(),
            };
            for (g, v) in vals.iter().enumerate() {
                wr.write_record([
                    id.clone(),
                    self.grid[g].to_string(),
                    v.to_string(),
                    self.support[r][g].to_string(),
                ])?;
            }
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Mean and between-model standard deviation of predictions over a 2-D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub bounds: [(f64, f64); 2],
    pub resolution: [usize; 2],
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Row-major with `x1` as the outer index: `mean[a * res2 + b]`.
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub n_models: usize,
    pub training_points: Vec<[f64; 2]>,
}

/// Evaluates every model on the grid. Bounds and resolution must both be
/// two-dimensional.
pub fn prediction_grid(models: &[&dyn Predictor], bounds: &[(f64, f64)], resolution: &[usize]) -> Result<GridField> {
    if bounds.len() != 2 || resolution.len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "prediction grids are 2-D; got {} bounds and {} resolutions",
            bounds.len(),
            resolution.len()
        )));
    }
    if models.is_empty() {
        return Err(Error::InvalidParameter("no models".into()));
    }
    if resolution.iter().any(|&r| r < 2) {
        return Err(Error::InvalidParameter("resolution must be >= 2 per axis".into()));
    }
    let x1 = linspace(bounds[0].0, bounds[0].1, resolution[0]);
    let x2 = linspace(bounds[1].0, bounds[1].1, resolution[1]);
    check_grid(&x1)?;
    check_grid(&x2)?;
    let mut c1 = Vec::with_capacity(x1.len() * x2.len());
    let mut c2 = Vec::with_capacity(x1.len() * x2.len());
    for &a in &x1 {
        for &b in &x2 {
            c1.push(a);
            c2.push(b);
        }
    }
    let pts = Features::from_columns(vec![c1, c2])?;
    let preds: Vec<Vec<f64>> = models.par_iter().map(|m| m.predict(&pts)).collect::<Result<_>>()?;
    let k = preds.len() as f64;
    let cells = pts.n_rows();
    let mut mean = vec![0.0; cells];
    let mut sd = vec![0.0; cells];
    for c in 0..cells {
        let m = preds.iter().map(|p| p[c]).sum::<f64>() / k;
        mean[c] = m;
        if preds.len() > 1 {
            let v = preds.iter().map(|p| (p[c] - m).powi(2)).sum::<f64>() / (k - 1.0);
            sd[c] = v.sqrt();
        }
    }
    Ok(GridField {
        bounds: [bounds[0], bounds[1]],
        resolution: [resolution[0], resolution[1]],
        x1,
        x2,
        mean,
        sd,
        n_models: models.len(),
        training_points: Vec::new(),
    })
}

impl GridField {
    pub fn with_training_points(mut self, pts: Vec<[f64; 2]>) -> Self {
        self.training_points = pts;
        self
    }

    /// Iterates `(x1, x2, mean, sd)` over cells.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        let r2 = self.resolution[1];
        (0..self.mean.len()).map(move |c| (self.x1[c / r2], self.x2[c % r2], self.mean[c], self.sd[c]))
    }

    /// Average of `value(x1, x2, mean, sd)` over cells where `keep(x1, x2)`.
    pub fn average_where<K, V>(&self, keep: K, value: V) -> Option<f64>
    where
        K: Fn(f64, f64) -> bool,
        V: Fn(f64, f64, f64, f64) -> f64,
    {
        let (mut s, mut n) = (0.0, 0usize);
        for (a, b, m, sd) in self.cells() {
            if keep(a, b) {
                s += value(a, b, m, sd);
                n += 1;
            }
        }
        (n > 0).then(|| s / n as f64)
    }

    /// CSV with columns `x1, x2, mean, sd`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x1", "x2", "mean", "sd"])?;
        for (a, b, m, s) in self.cells() {
            wr.write_record([a.to_string(), b.to_string(), m.to_string(), s.to_string()])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit_linear, LinearModel};
    use crate::synthgen::{CopulaSpec, GeneratorConfig};

    struct Constant(usize, f64);

    impl Predictor for Constant {
        fn n_features(&self) -> usize {
            self.0
        }
        fn predict(&self, x: &Features) -> Result<Vec<f64>> {
            Ok(vec![self.1; x.n_rows()])
        }
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = default_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[20], 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_model_gives_flat_curves() {
        let d = GeneratorConfig::benchmark(30, 0.0, 1).generate().unwrap();
        let m = Constant(10, 1.25);
        let pd = partial_dependence(&m, &d, 0, &default_grid()).unwrap();
        assert!(pd.values[0].iter().all(|&v| v == 1.25));
        let ice = ice_curves(&m, &d, &[0, 1, 2], 3, &default_grid(), None).unwrap();
        assert!(ice.values.iter().flatten().all(|&v| v == 1.25));
    }

    #[test]
    fn pd_is_mean_of_ice() {
        let d = GeneratorConfig::benchmark(50, 0.9, 2).generate().unwrap();
        let m = fit_linear(&d).unwrap();
        let rows: Vec<usize> = (0..50).collect();
        let pd = partial_dependence(&m, &d, 1, &default_grid()).unwrap();
        let ice = ice_curves(&m, &d, &rows, 1, &default_grid(), None).unwrap();
        for (a, b) in pd.values[0].iter().zip(ice.mean_curve()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pd_invariant_to_row_order() {
        let d = GeneratorConfig::benchmark(40, 0.5, 3).generate().unwrap();
        let m = fit_linear(&d).unwrap();
        let rev: Vec<usize> = (0..40).rev().collect();
        let a = partial_dependence(&m, &d, 0, &default_grid()).unwrap();
        let b = partial_dependence(&m, &d.select_rows(&rev).unwrap(), 0, &default_grid()).unwrap();
        for (x, y) in a.values[0].iter().zip(&b.values[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ignored_feature_gives_flat_ice() {
        let d = GeneratorConfig::benchmark(20, 0.0, 4).generate().unwrap();
        let mut m = fit_linear(&d).unwrap();
        m.beta[4] = 0.0;
        let ice = ice_curves(&m, &d, &[3, 7], 4, &default_grid(), None).unwrap();
        for curve in &ice.values {
            assert!(curve.iter().all(|&v| v == curve[0]));
        }
    }

    #[test]
    fn support_mask_matches_conditional_range() {
        let spec = CopulaSpec::first_pair(2, 0.9).unwrap();
        let support = CopulaSupport::new(CopulaLaw::new(spec));
        let x = Features::from_rows(&[vec![0.3, 0.5]]).unwrap();
        let d = Dataset::with_default_names(x, vec![0.0]).unwrap();
        let m = LinearModel {
            beta0: 0.0,
            beta: vec![1.0, 0.0],
            column_means: vec![0.5, 0.5],
        };
        let ice = ice_curves(&m, &d, &[0], 0, &default_grid(), Some(&support)).unwrap();
        for (g, &ok) in ice.grid.iter().zip(&ice.support[0]) {
            assert_eq!(ok, *g > 0.19166 && *g < 0.80834, "grid {g}");
        }
        assert!(ice.warnings.is_empty());
    }

    struct Unknown;
    impl SupportRange for Unknown {
        fn range(&self, _: &[f64], _: usize) -> Option<(f64, f64)> {
            None
        }
    }

    #[test]
    fn missing_law_warns_and_keeps_mask() {
        let d = GeneratorConfig::benchmark(10, 0.0, 5).generate().unwrap();
        let m = fit_linear(&GeneratorConfig::benchmark(100, 0.0, 5).generate().unwrap()).unwrap();
        let ice = ice_curves(&m, &d, &[0, 1], 2, &default_grid(), Some(&Unknown)).unwrap();
        assert!(ice.support.iter().flatten().all(|&b| b));
        assert_eq!(ice.warnings.len(), 1);
    }

    #[test]
    fn curve_errors() {
        let d = GeneratorConfig::benchmark(10, 0.0, 6).generate().unwrap();
        let m = Constant(10, 0.0);
        assert!(partial_dependence(&m, &d, 0, &[]).is_err());
        assert!(partial_dependence(&m, &d, 0, &[0.5, 0.2]).is_err());
        assert!(partial_dependence(&Constant(3, 0.0), &d, 0, &[0.5]).is_err());
        assert!(ice_curves(&m, &d, &[10], 0, &[0.5], None).is_err());
    }

    #[test]
    fn single_model_field_has_zero_sd() {
        let m = Constant(2, 3.0);
        let f = prediction_grid(&[&m], &[(0.0, 1.0), (0.0, 1.0)], &[11, 6]).unwrap();
        assert_eq!(f.mean.len(), 66);
        assert!(f.sd.iter().all(|&s| s == 0.0));
        assert!(prediction_grid(&[&m], &[(0.0, 1.0)], &[11]).is_err());
        assert!(prediction_grid(&[], &[(0.0, 1.0), (0.0, 1.0)], &[3, 3]).is_err());
    }

    #[test]
    fn field_sd_between_models() {
        let a = Constant(2, 1.0);
        let b = Constant(2, 3.0);
        let f = prediction_grid(&[&a, &b], &[(0.0, 1.0), (0.0, 1.0)], &[3, 3]).unwrap();
        assert!(f.mean.iter().all(|&m| m == 2.0));
        assert!(f.sd.iter().all(|&s| (s - 2f64.sqrt()).abs() < 1e-12));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x1,x2,mean,sd\n0,0,2,"));
        assert_eq!(s.lines().count(), 10);
    }
}
