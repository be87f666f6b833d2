//! Closed-form importance targets for linear models and an enumeration
//! reference for small samples.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{squared_loss, Dataset, Features, Permutation};
use crate::error::{Error, Result};
use crate::learners::{least_squares, LinearModel, Predictor};
use crate::rng::SeededStream;
use crate::stats::{norm_cdf, norm_inv};
use crate::synthgen::CopulaSpec;

/// Largest sample for which [`brute_force_vi`] enumerates permutations.
pub const MAX_ENUMERATION_ROWS: usize = 8;
/// Default Monte Carlo draws per row for conditional variances.
pub const DEFAULT_N_MC: usize = 5000;

/// Fitted linear coefficients together with the column summaries of the
/// data they are evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOracle {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub means: Vec<f64>,
    /// Centered sums of squares `S_j`.
    pub sum_sq: Vec<f64>,
}

impl LinearOracle {
    pub fn new(model: &LinearModel, x: &Features) -> Result<Self> {
        if model.beta.len() != x.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: model.beta.len(),
                actual: x.n_cols(),
            });
        }
        let n = x.n_rows() as f64;
        let means: Vec<f64> = x.columns().iter().map(|c| c.iter().sum::<f64>() / n).collect();
        let sum_sq = x
            .columns()
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum())
            .collect();
        Ok(Self {
            beta0: model.beta0,
            beta: model.beta.clone(),
            means,
            sum_sq,
        })
    }

    /// Expected permute-and-predict importance, `2 beta_j^2 S_j`.
    pub fn theorem1_vi(&self) -> Vec<f64> {
        self.beta
            .iter()
            .zip(&self.sum_sq)
            .map(|(b, s)| 2.0 * b * b * s)
            .collect()
    }

    /// Intercept and slope of the partial dependence line for feature `j`.
    pub fn theorem1_pd_line(&self, j: usize) -> (f64, f64) {
        let c = self.beta0
            + self
                .beta
                .iter()
                .zip(&self.means)
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, (b, m))| b * m)
                .sum::<f64>();
        (c, self.beta[j])
    }

    /// Intercept and slope of the ICE line for feature `j` at `row`.
    pub fn theorem1_ice_line(&self, row: &[f64], j: usize) -> (f64, f64) {
        let c = self.beta0
            + self
                .beta
                .iter()
                .zip(row)
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, (b, x))| b * x)
                .sum::<f64>();
        (c, self.beta[j])
    }
}

/// Linear dependence of one column on the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDependence {
    pub feature: usize,
    pub gamma0: f64,
    /// Coefficients on the remaining columns, in their original order.
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    /// Residual sum of squares `D_j`.
    pub rss: f64,
}

/// Least-squares regression of column `j` on every other column.
pub fn regress_feature(d: &Dataset, j: usize) -> Result<FeatureDependence> {
    let x = d.features();
    if j >= x.n_cols() {
        return Err(Error::FeatureOutOfRange {
            index: j,
            width: x.n_cols(),
        });
    }
    let target = x.column(j);
    if x.n_cols() == 1 {
        let m = target.iter().sum::<f64>() / target.len() as f64;
        let delta: Vec<f64> = target.iter().map(|v| v - m).collect();
        let rss = delta.iter().map(|v| v * v).sum();
        return Ok(FeatureDependence {
            feature: j,
            gamma0: m,
            gamma: Vec::new(),
            delta,
            rss,
        });
    }
    let rest = x.drop_column(j)?;
    let (gamma0, gamma) = least_squares(&rest, target)?;
    let delta: Vec<f64> = (0..x.n_rows())
        .map(|i| {
            let fit = gamma0
                + gamma
                    .iter()
                    .zip(rest.columns())
                    .map(|(g, c)| g * c[i])
                    .sum::<f64>();
            target[i] - fit
        })
        .collect();
    let rss = delta.iter().map(|v| v * v).sum();
    Ok(FeatureDependence {
        feature: j,
        gamma0,
        gamma,
        delta,
        rss,
    })
}

/// Per-feature dependence structure of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceOracle {
    pub features: Vec<FeatureDependence>,
    /// `V_j`; `None` when no conditional law is available.
    pub conditional_variance: Vec<Option<f64>>,
}

impl DependenceOracle {
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        let features = (0..d.n_features())
            .map(|j| regress_feature(d, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            conditional_variance: vec![None; features.len()],
            features,
        })
    }

    /// Fills in `V_j` for every feature under the copula design.
    pub fn with_copula(mut self, spec: &CopulaSpec, x: &Features, n_mc: usize, stream: SeededStream) -> Result<Self> {
        self.conditional_variance = (0..self.features.len())
            .map(|j| conditional_variance_sum(spec, x, j, n_mc, stream.child("cond_var", j as u64)).map(Some))
            .collect::<Result<_>>()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Targets {
    pub drop: f64,
    pub relearn: f64,
    pub conditional: Option<f64>,
}

/// `(beta_j^2 D_j, 2 beta_j^2 D_j, 2 beta_j^2 V_j)` per feature.
pub fn theorem2_targets(dep: &DependenceOracle, beta: &[f64]) -> Result<Vec<Theorem2Targets>> {
    if beta.len() != dep.features.len() {
        return Err(Error::DimensionMismatch {
            expected: dep.features.len(),
            actual: beta.len(),
        });
    }
    Ok(beta
        .iter()
        .zip(&dep.features)
        .zip(&dep.conditional_variance)
        .map(|((b, f), v)| {
            let b2 = b * b;
            Theorem2Targets {
                drop: b2 * f.rss,
                relearn: 2.0 * b2 * f.rss,
                conditional: v.map(|v| 2.0 * b2 * v),
            }
        })
        .collect())
}

/// `sum_i var(x_ij | x_i,-j)` under `spec`. Exact `N/12` for features
/// outside the pair; Monte Carlo with `n_mc` draws per row otherwise.
pub fn conditional_variance_sum(
    spec: &CopulaSpec,
    x: &Features,
    j: usize,
    n_mc: usize,
    stream: SeededStream,
) -> Result<f64> {
    spec.validate()?;
    if x.n_cols() != spec.p {
        return Err(Error::DimensionMismatch {
            expected: spec.p,
            actual: x.n_cols(),
        });
    }
    if j >= spec.p {
        return Err(Error::UnsupportedConditional(j));
    }
    let n = x.n_rows();
    let Some(partner) = spec.partner(j) else {
        return Ok(n as f64 / 12.0);
    };
    if spec.rho.abs() >= 1.0 {
        return Ok(0.0);
    }
    if n_mc < 2 {
        return Err(Error::InvalidParameter(format!("n_mc = {n_mc} must be >= 2")));
    }
    let s = (1.0 - spec.rho * spec.rho).sqrt();
    let mut rng = stream.rng();
    let mut total = 0.0;
    for &u in x.column(partner) {
        let m = spec.rho * norm_inv(u.clamp(f64::EPSILON, 1.0 - f64::EPSILON));
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n_mc {
            let z: f64 = rng.sample(StandardNormal);
            let v = norm_cdf(m + s * z);
            sum += v;
            sum2 += v * v;
        }
        let k = n_mc as f64;
        total += ((sum2 - sum * sum / k) / (k - 1.0)).max(0.0);
    }
    Ok(total)
}

/// Mean permute-and-predict importance over all `N!` orderings of column `j`.
pub fn brute_force_vi(model: &dyn Predictor, d: &Dataset, j: usize) -> Result<f64> {
    let n = d.n_rows();
    if n > MAX_ENUMERATION_ROWS {
        return Err(Error::InvalidParameter(format!(
            "enumeration limited to {MAX_ENUMERATION_ROWS} rows, got {n}"
        )));
    }
    if j >= d.n_features() {
        return Err(Error::FeatureOutOfRange {
            index: j,
            width: d.n_features(),
        });
    }
    let base = squared_loss(d.response(), &model.predict(d.features())?)?.total;
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    let mut visit = |order: &[usize]| -> Result<()> {
        let x = d.features().permute_column(j, &Permutation::new(order.to_vec())?)?;
        total += squared_loss(d.response(), &model.predict(&x)?)?.total - base;
        count += 1;
        Ok(())
    };
    visit(&order)?;
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order)?;
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(total / count as f64)
}

/// `sum_i (beta_j (x_ij - mean_j) + beta_k (x_ik - mean_k))^2`.
pub fn joint_pair_importance(o: &LinearOracle, d: &Dataset, j: usize, k: usize) -> Result<f64> {
    if j == k {
        return Err(Error::InvalidParameter(format!("joint importance needs two distinct features, got {j} twice")));
    }
    let p = o.beta.len();
    if d.n_features() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: d.n_features(),
        });
    }
    for f in [j, k] {
        if f >= p {
            return Err(Error::FeatureOutOfRange { index: f, width: p });
        }
    }
    let x = d.features();
    Ok(x.column(j)
        .iter()
        .zip(x.column(k))
        .map(|(a, b)| (o.beta[j] * (a - o.means[j]) + o.beta[k] * (b - o.means[k])).powi(2))
        .sum())
}

/// One line of an oracle table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub feature: String,
    pub theorem: String,
    pub target_name: String,
    pub value: f64,
}

/// Collects the closed-form permute-and-predict, PD, drop, refit and
/// conditional targets into table rows.
pub fn oracle_rows(names: &[String], lin: &LinearOracle, targets: &[Theorem2Targets]) -> Vec<OracleRow> {
    let mut rows = Vec::new();
    let row = |f: &String, t: &str, n: &str, v: f64| OracleRow {
        feature: f.clone(),
        theorem: t.into(),
        target_name: n.into(),
        value: v,
    };
    for (j, name) in names.iter().enumerate() {
        rows.push(row(name, "theorem1", "permute_predict", lin.theorem1_vi()[j]));
        let (c, s) = lin.theorem1_pd_line(j);
        rows.push(row(name, "theorem1", "pd_intercept", c));
        rows.push(row(name, "theorem1", "pd_slope", s));
        if let Some(t) = targets.get(j) {
            rows.push(row(name, "theorem2", "drop", t.drop));
            rows.push(row(name, "theorem2", "relearn", t.relearn));
            if let Some(c) = t.conditional {
                rows.push(row(name, "theorem2", "conditional", c));
            }
        }
    }
    rows
}

/// CSV with columns `feature, theorem, target_name, value`.
pub fn write_oracle_csv<W: Write>(rows: &[OracleRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["feature", "theorem", "target_name", "value"])?;
    for r in rows {
        wr.write_record([r.feature.clone(), r.theorem.clone(), r.target_name.clone(), r.value.to_string()])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_linear;
    use crate::synthgen::GeneratorConfig;

    fn line_data(x: &[f64], y: &[f64]) -> Dataset {
        let f = Features::from_columns(vec![x.to_vec()]).unwrap();
        Dataset::with_default_names(f, y.to_vec()).unwrap()
    }

    #[test]
    fn three_point_closed_form() {
        let d = line_data(&[0.0, 0.5, 1.0], &[0.0, 1.0, 2.0]);
        let m = fit_linear(&d).unwrap();
        let o = LinearOracle::new(&m, d.features()).unwrap();
        assert!((o.theorem1_vi()[0] - 4.0).abs() < 1e-12);
        assert!((brute_force_vi(&m, &d, 0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_and_doubled_coefficients() {
        let d = GeneratorConfig::benchmark(50, 0.0, 1).generate().unwrap();
        let m = fit_linear(&d).unwrap();
        let mut o = LinearOracle::new(&m, d.features()).unwrap();
        let before = o.theorem1_vi();
        o.beta[2] *= 2.0;
        o.beta[3] = 0.0;
        let after = o.theorem1_vi();
        assert!((after[2] - 4.0 * before[2]).abs() < 1e-9 * before[2].max(1.0));
        assert_eq!(after[3], 0.0);
    }

    #[test]
    fn pd_line_reduces_to_intercept() {
        let o = LinearOracle {
            beta0: 1.5,
            beta: vec![0.0, 3.0, 0.0],
            means: vec![0.2, 0.4, 0.6],
            sum_sq: vec![1.0; 3],
        };
        assert_eq!(o.theorem1_pd_line(1), (1.5, 3.0));
        assert_eq!(o.theorem1_ice_line(&[9.0, 9.0, 9.0], 1), (1.5, 3.0));
    }

    #[test]
    fn single_row_enumeration_is_zero() {
        let d = line_data(&[0.3], &[1.0]);
        let m = LinearModel {
            beta0: 0.0,
            beta: vec![2.0],
            column_means: vec![0.3],
        };
        assert_eq!(brute_force_vi(&m, &d, 0).unwrap(), 0.0);
        let big = line_data(&[0.0; 9], &[0.0; 9]);
        assert!(brute_force_vi(&m, &big, 0).is_err());
    }

    #[test]
    fn enumeration_visits_every_permutation_once() {
        // Distinct powers of two make every ordering's loss distinct.
        let x: Vec<f64> = (0..5).map(|i| 2f64.powi(i)).collect();
        let d = line_data(&x, &[0.0; 5]);
        let m = LinearModel {
            beta0: 0.0,
            beta: vec![1.0],
            column_means: vec![0.0],
        };
        let o = LinearOracle::new(&m, d.features()).unwrap();
        let bf = brute_force_vi(&m, &d, 0).unwrap();
        // with y = 0 every ordering has the same loss
        assert_eq!(bf, 0.0);
        let d2 = line_data(&x, &x);
        let bf2 = brute_force_vi(&m, &d2, 0).unwrap();
        assert!((bf2 - o.theorem1_vi()[0]).abs() < 1e-9);
    }

    #[test]
    fn regression_residuals_are_orthogonal() {
        let d = GeneratorConfig::benchmark(2000, 0.9, 2).generate().unwrap();
        let lin = LinearOracle::new(&fit_linear(&d).unwrap(), d.features()).unwrap();
        for j in [0, 1, 4] {
            let f = regress_feature(&d, j).unwrap();
            let n = d.n_rows() as f64;
            assert!(f.delta.iter().sum::<f64>().abs() <= 1e-6 * n);
            for k in (0..10).filter(|&k| k != j) {
                let ip: f64 = f.delta.iter().zip(d.features().column(k)).map(|(a, b)| a * b).sum();
                assert!(ip.abs() <= 1e-6 * n);
            }
            assert!(f.rss <= lin.sum_sq[j] * (1.0 + 1e-12));
        }
        let d1 = regress_feature(&d, 0).unwrap().rss;
        assert!(d1 / lin.sum_sq[0] < 0.5);
        let d4 = regress_feature(&d, 4).unwrap().rss;
        assert!((d4 / lin.sum_sq[4] - 1.0).abs() < 0.02);
    }

    #[test]
    fn collinear_column_has_zero_residual() {
        let base = GeneratorConfig::benchmark(40, 0.0, 3).generate().unwrap();
        let x = base.features();
        let combo: Vec<f64> = (0..40).map(|i| 2.0 * x.get(i, 0) - x.get(i, 1) + 0.5).collect();
        let f = Features::from_columns(vec![x.column(0).to_vec(), x.column(1).to_vec(), combo]).unwrap();
        let d = Dataset::with_default_names(f, vec![0.0; 40]).unwrap();
        assert!(regress_feature(&d, 2).unwrap().rss < 1e-20);
    }

    #[test]
    fn drop_relearn_ratio_is_one_to_two() {
        let d = GeneratorConfig::benchmark(300, 0.9, 4).generate().unwrap();
        let m = fit_linear(&d).unwrap();
        let dep = DependenceOracle::from_dataset(&d).unwrap();
        for t in theorem2_targets(&dep, &m.beta).unwrap() {
            assert_eq!(t.relearn, 2.0 * t.drop);
        }
        let zero = theorem2_targets(&dep, &[0.0; 10]).unwrap();
        assert!(zero.iter().all(|t| t.drop == 0.0 && t.relearn == 0.0));
    }

    #[test]
    fn conditional_variance_limits() {
        let cfg = GeneratorConfig::benchmark(400, 0.0, 5);
        let d = cfg.generate().unwrap();
        let spec = cfg.copula().unwrap();
        let v = conditional_variance_sum(&spec, d.features(), 0, 2000, SeededStream::from_seed(1)).unwrap();
        assert!((v / (400.0 / 12.0) - 1.0).abs() < 0.01, "{v}");
        assert_eq!(
            conditional_variance_sum(&spec, d.features(), 5, 10, SeededStream::from_seed(1)).unwrap(),
            400.0 / 12.0
        );
        let tight = CopulaSpec::first_pair(10, 0.9999).unwrap();
        let v = conditional_variance_sum(&tight, d.features(), 1, 500, SeededStream::from_seed(1)).unwrap();
        assert!(v < 0.01 * 400.0 / 12.0);
        assert!(conditional_variance_sum(&spec, d.features(), 10, 10, SeededStream::from_seed(1)).is_err());
    }

    #[test]
    fn joint_importance_cases() {
        let d = GeneratorConfig::benchmark(2000, 0.0, 6).generate().unwrap();
        let o = LinearOracle::new(&fit_linear(&d).unwrap(), d.features()).unwrap();
        let joint = joint_pair_importance(&o, &d, 0, 1).unwrap();
        let sep = o.beta[0].powi(2) * o.sum_sq[0] + o.beta[1].powi(2) * o.sum_sq[1];
        assert!((joint / sep - 1.0).abs() < 0.03);
        assert!(joint_pair_importance(&o, &d, 2, 2).is_err());
        let mut z = o.clone();
        z.beta[0] = 0.0;
        z.beta[1] = 0.0;
        assert_eq!(joint_pair_importance(&z, &d, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn oracle_csv_header() {
        let lin = LinearOracle {
            beta0: 0.0,
            beta: vec![1.0],
            means: vec![0.0],
            sum_sq: vec![2.0],
        };
        let rows = oracle_rows(&["x1".to_string()], &lin, &[]);
        let mut buf = Vec::new();
        write_oracle_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("feature,theorem,target_name,value\nx1,theorem1,permute_predict,4\n"));
    }
}
