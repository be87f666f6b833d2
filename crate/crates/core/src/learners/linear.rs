use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_width, Predictor};
use crate::dataset::{Dataset, Features};
use crate::error::{Error, Result};

/// Relative threshold on the diagonal of R below which the design is
/// declared rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub column_means: Vec<f64>,
}

/// Least-squares fit of `y` on the columns of `x` plus an intercept, by
/// Householder QR. Returns `(intercept, coefficients)`.
pub fn least_squares(x: &Features, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n <= p {
        return Err(Error::SingularDesign(format!(
            "{n} rows cannot determine {p} coefficients and an intercept"
        )));
    }
    // Centering first improves conditioning; the intercept is recovered after.
    let means: Vec<f64> = x.columns().iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let ymean = y.iter().sum::<f64>() / n as f64;
    let a = DMatrix::from_fn(n, p + 1, |i, k| {
        if k == 0 {
            1.0
        } else {
            x.get(i, k - 1) - means[k - 1]
        }
    });
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let qr = a.qr();
    let r = qr.r();
    for k in 0..=p {
        if r[(k, k)].abs() <= RANK_TOL * scale {
            let what = if k == 0 {
                "intercept".to_string()
            } else {
                format!("feature {}", k - 1)
            };
            return Err(Error::SingularDesign(format!(
                "{what} is a linear combination of the preceding columns"
            )));
        }
    }
    let mut b = DVector::from_iterator(n, y.iter().map(|v| v - ymean));
    qr.q_tr_mul(&mut b);
    let rhs = b.rows(0, p + 1).into_owned();
    let coef = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let beta: Vec<f64> = coef.iter().skip(1).copied().collect();
    let beta0 = ymean + coef[0] - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok((beta0, beta))
}

pub fn fit_linear(d: &Dataset) -> Result<LinearModel> {
    let (beta0, beta) = least_squares(d.features(), d.response())?;
    let n = d.n_rows() as f64;
    let column_means = d
        .features()
        .columns()
        .iter()
        .map(|c| c.iter().sum::<f64>() / n)
        .collect();
    Ok(LinearModel {
        beta0,
        beta,
        column_means,
    })
}

impl LinearModel {
    pub fn predict_one(&self, row: &[f64]) -> f64 {
        self.beta0 + self.beta.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

impl Predictor for LinearModel {
    fn n_features(&self) -> usize {
        self.beta.len()
    }

    fn predict(&self, x: &Features) -> Result<Vec<f64>> {
        check_width(self.beta.len(), x)?;
        let mut out = vec![self.beta0; x.n_rows()];
        for (c, &b) in x.columns().iter().zip(&self.beta) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += b * v;
            }
        }
        Ok(out)
    }
}
