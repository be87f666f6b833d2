//! Synthetic benchmark: Uniform[0,1] marginals, one pair of features tied by
//! a Gaussian copula, and a linear response with Gaussian noise.
//!
//! The copula parameter is the latent bivariate-normal correlation. Given the
//! partner value `u`, the other member of the pair is exactly
//! `Phi(Normal(rho * Phi^-1(u), 1 - rho^2))`, which is what the conditional
//! sampler and the support ranges use.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{default_names, Dataset, Features};
use crate::error::{Error, Result};
use crate::rng::SeededStream;
use crate::stats::{norm_cdf, norm_inv};

/// Coefficients of the ten-feature benchmark response.
pub const BENCHMARK_BETA: [f64; 10] = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.5, 0.8, 1.2, 1.5];
/// Noise standard deviation of the ten-feature benchmark.
pub const BENCHMARK_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub p: usize,
    /// Zero-based indices of the correlated pair.
    pub pair: (usize, usize),
    pub rho: f64,
}

impl CopulaSpec {
    pub fn new(p: usize, pair: (usize, usize), rho: f64) -> Result<Self> {
        let s = Self { p, pair, rho };
        s.validate()?;
        Ok(s)
    }

    /// Pair is the first two features.
    pub fn first_pair(p: usize, rho: f64) -> Result<Self> {
        Self::new(p, (0, 1), rho)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.pair;
        if a == b || a >= self.p || b >= self.p {
            return Err(Error::InvalidParameter(format!(
                "copula pair {:?} invalid for p = {}",
                self.pair, self.p
            )));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho = {} outside [-1, 1]",
                self.rho
            )));
        }
        Ok(())
    }

    /// The other member of the pair, if `j` belongs to it.
    pub fn partner(&self, j: usize) -> Option<usize> {
        match j {
            _ if j == self.pair.0 => Some(self.pair.1),
            _ if j == self.pair.1 => Some(self.pair.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

impl ResponseSpec {
    /// The ten-feature benchmark: zero intercept, [`BENCHMARK_BETA`],
    /// noise sd [`BENCHMARK_SIGMA`].
    pub fn benchmark() -> Self {
        Self {
            beta0: 0.0,
            beta: BENCHMARK_BETA.to_vec(),
            sigma: BENCHMARK_SIGMA,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma = {}", self.sigma)));
        }
        if !self.beta0.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("response coefficients".into()));
        }
        Ok(())
    }
}

/// Draws an `n x p` feature matrix under `spec`.
pub fn sample_features(spec: &CopulaSpec, n: usize, stream: SeededStream) -> Result<Features> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let mut rng = stream.rng();
    let mut columns = vec![Vec::with_capacity(n); spec.p];
    let (a, b) = spec.pair;
    let resid = (1.0 - spec.rho * spec.rho).max(0.0).sqrt();
    for _ in 0..n {
        for (j, col) in columns.iter_mut().enumerate() {
            if j != a && j != b {
                col.push(rng.sample::<f64, _>(Open01));
            }
        }
        let z1: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let z2 = spec.rho * z1 + resid * e;
        columns[a].push(open_unit(norm_cdf(z1)));
        columns[b].push(open_unit(norm_cdf(z2)));
    }
    Features::from_columns(columns)
}

/// Keeps copula outputs strictly inside (0, 1) so they remain valid
/// conditioning values.
fn open_unit(u: f64) -> f64 {
    const EPS: f64 = f64::EPSILON / 2.0;
    u.clamp(EPS, 1.0 - EPS)
}

fn check_conditional(x_given: f64, rho: f64) -> Result<()> {
    if !(x_given > 0.0 && x_given < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "conditioning value {x_given} must lie in (0, 1)"
        )));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "conditional law degenerate at rho = {rho}"
        )));
    }
    Ok(())
}

/// One draw of the partner feature given `x_given`.
pub fn conditional_sample<R: Rng + ?Sized>(x_given: f64, rho: f64, rng: &mut R) -> Result<f64> {
    check_conditional(x_given, rho)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(conditional_draw(x_given, rho, z))
}

/// Deterministic transform of a standard normal `z` into a conditional draw.
pub(crate) fn conditional_draw(x_given: f64, rho: f64, z: f64) -> f64 {
    let m = rho * norm_inv(x_given);
    open_unit(norm_cdf(m + (1.0 - rho * rho).sqrt() * z))
}

/// Interval of +-`k` latent conditional standard deviations, mapped back to
/// the unit scale.
pub fn conditional_range(x_given: f64, rho: f64, k: f64) -> Result<(f64, f64)> {
    check_conditional(x_given, rho)?;
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("width multiplier {k}")));
    }
    let m = rho * norm_inv(x_given);
    let s = (1.0 - rho * rho).sqrt();
    Ok((norm_cdf(m - k * s), norm_cdf(m + k * s)))
}

/// `y = beta0 + X beta + eps`, `eps ~ N(0, sigma^2)` iid.
pub fn gen_response(x: &Features, spec: &ResponseSpec, stream: SeededStream) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.beta.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: spec.beta.len(),
            actual: x.n_cols(),
        });
    }
    let mut y = vec![spec.beta0; x.n_rows()];
    for (c, &b) in x.columns().iter().zip(&spec.beta) {
        for (yi, xi) in y.iter_mut().zip(c) {
            *yi += b * xi;
        }
    }
    if spec.sigma > 0.0 {
        let mut rng = stream.rng();
        for yi in y.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *yi += spec.sigma * e;
        }
    }
    Ok(y)
}

/// Complete generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    /// Zero-based pair indices.
    #[serde(default = "default_pair")]
    pub pair: (usize, usize),
    #[serde(default)]
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

fn default_pair() -> (usize, usize) {
    (0, 1)
}

impl GeneratorConfig {
    /// Ten-feature benchmark with `n` rows and copula parameter `rho`.
    pub fn benchmark(n: usize, rho: f64, seed: u64) -> Self {
        Self {
            n,
            p: BENCHMARK_BETA.len(),
            rho,
            pair: (0, 1),
            beta0: 0.0,
            beta: BENCHMARK_BETA.to_vec(),
            sigma: BENCHMARK_SIGMA,
            seed,
        }
    }

    pub fn copula(&self) -> Result<CopulaSpec> {
        CopulaSpec::new(self.p, self.pair, self.rho)
    }

    pub fn response(&self) -> ResponseSpec {
        ResponseSpec {
            beta0: self.beta0,
            beta: self.beta.clone(),
            sigma: self.sigma,
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        let root = SeededStream::from_seed(self.seed);
        self.generate_from(root)
    }

    /// Generates using `root` in place of the configured seed.
    pub fn generate_from(&self, root: SeededStream) -> Result<Dataset> {
        let x = sample_features(&self.copula()?, self.n, root.child("features", 0))?;
        let y = gen_response(&x, &self.response(), root.child("noise", 0))?;
        Dataset::new(x, y, default_names(self.p))
    }
}

/// Exact conditional law of the benchmark design: copula pair members are
/// drawn given their partner, every other feature from its Uniform[0,1]
/// marginal.
#[derive(Debug, Clone, Copy)]
pub struct CopulaLaw {
    pub spec: CopulaSpec,
}

impl CopulaLaw {
    pub fn new(spec: CopulaSpec) -> Self {
        Self { spec }
    }

    /// Redraws column `j` of `x` row by row from its conditional law.
    pub fn sample_column<R: Rng + ?Sized>(&self, x: &Features, j: usize, rng: &mut R) -> Result<Vec<f64>> {
        if j >= x.n_cols() || x.n_cols() != self.spec.p {
            return Err(Error::DimensionMismatch {
                expected: self.spec.p,
                actual: x.n_cols(),
            });
        }
        match self.spec.partner(j) {
            Some(k) => x
                .column(k)
                .iter()
                .map(|&u| conditional_sample(open_unit(u), self.spec.rho, rng))
                .collect(),
            None => Ok((0..x.n_rows()).map(|_| rng.sample::<f64, _>(Open01)).collect()),
        }
    }

    /// Support interval for feature `j` at a row whose values are `row`.
    /// Non-pair features are supported on all of [0, 1].
    pub fn support(&self, row: &[f64], j: usize, k: f64) -> Result<(f64, f64)> {
        match self.spec.partner(j) {
            Some(partner) => conditional_range(open_unit(row[partner]), self.spec.rho, k),
            None => Ok((0.0, 1.0)),
        }
    }
}
