//! Closed-form checks for linear models: permute-and-predict importance,
//! PD and ICE lines, and the drop, refit and conditional targets.

use permdiag::dataset::Dataset;
use permdiag::effects::{default_grid, ice_curves, partial_dependence};
use permdiag::importance::{vi_condition_relearn, vi_conditional, vi_drop, vi_pap, vi_permute_relearn};
use permdiag::learners::{fit_linear, LinearLearner, LinearModel, Predictor};
use permdiag::oracle::{brute_force_vi, oracle_rows, theorem2_targets, write_oracle_csv, DependenceOracle, LinearOracle, OracleRow, DEFAULT_N_MC};
use permdiag::synthgen::{CopulaLaw, GeneratorConfig, BENCHMARK_BETA};

use super::SeedLog;
use crate::bundle::Bundle;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Context};

pub const ENUMERATION_N: usize = 6;
pub const ENUMERATION_TOL: f64 = 1e-9;
pub const MC_N: usize = 500;
pub const MC_REPS: usize = 200;
pub const MC_REL_TOL: f64 = 0.05;
pub const LINES_N: usize = 500;
pub const LINES_TOL: f64 = 1e-9;
pub const THEOREM2_N: usize = 2000;
pub const THEOREM2_RHO: f64 = 0.9;
pub const THEOREM2_REPS: usize = 20;
pub const DROP_REL_TOL: f64 = 0.02;
pub const REFIT_REL_TOL: f64 = 0.10;
/// Inner products of residuals with columns, relative to `N`.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tolerance {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub check: String,
    pub feature: String,
    pub expected: f64,
    pub observed: f64,
    pub kind: Tolerance,
    pub tolerance: f64,
}

impl Check {
    pub fn abs_error(&self) -> f64 {
        (self.observed - self.expected).abs()
    }

    pub fn rel_error(&self) -> f64 {
        self.abs_error() / self.expected.abs()
    }

    pub fn pass(&self) -> bool {
        let e = match self.kind {
            Tolerance::Absolute => self.abs_error(),
            Tolerance::Relative => self.rel_error(),
        };
        e <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct TheoremResult {
    pub checks: Vec<Check>,
    pub oracle: Vec<OracleRow>,
    pub seeds: SeedLog,
}

impl TheoremResult {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass()).count()
    }
}

fn check(name: &str, feature: &str, expected: f64, observed: f64, kind: Tolerance, tolerance: f64) -> Check {
    Check {
        check: name.into(),
        feature: feature.into(),
        expected,
        observed,
        kind,
        tolerance,
    }
}

fn linear(d: &Dataset) -> Result<(LinearModel, LinearOracle), CliError> {
    let m = fit_linear(d).context(|| "linear fit".into())?;
    let o = LinearOracle::new(&m, d.features()).context(|| "linear oracle".into())?;
    Ok((m, o))
}

fn benchmark(n: usize, rho: f64, seeds: &mut SeedLog, master: u64, role: &str) -> Result<Dataset, CliError> {
    GeneratorConfig::benchmark(n, rho, 0)
        .generate_from(seeds.derive(master, 0, role))
        .context(|| format!("{role} data"))
}

/// Exhaustive average over all orderings against the closed form.
pub fn enumeration(master: u64, seeds: &mut SeedLog) -> Result<Vec<Check>, CliError> {
    let g = GeneratorConfig {
        n: ENUMERATION_N,
        p: 2,
        rho: 0.5,
        pair: (0, 1),
        beta0: 0.0,
        beta: vec![1.0, 2.0],
        sigma: 0.1,
        seed: 0,
    };
    let d = g.generate_from(seeds.derive(master, 0, "theorem/enumeration")).context(|| "enumeration data".into())?;
    let (m, o) = linear(&d)?;
    let closed = o.theorem1_vi();
    (0..d.n_features())
        .map(|j| {
            let bf = brute_force_vi(&m, &d, j).context(|| "enumeration".into())?;
            Ok(check("theorem1_enumeration", &d.names()[j], closed[j], bf, Tolerance::Absolute, ENUMERATION_TOL))
        })
        .collect()
}

/// Sampled permutations against the closed form, features with a nonzero
/// generating coefficient only.
pub fn monte_carlo(master: u64, seeds: &mut SeedLog) -> Result<Vec<Check>, CliError> {
    let d = benchmark(MC_N, 0.0, seeds, master, "theorem/monte_carlo")?;
    let (m, o) = linear(&d)?;
    let closed = o.theorem1_vi();
    let stream = seeds.derive(master, 0, "theorem/monte_carlo/permutations");
    let mut out = Vec::new();
    for j in (0..d.n_features()).filter(|&j| BENCHMARK_BETA[j] != 0.0) {
        let v = vi_pap(&m, &d, j, MC_REPS, stream.child("feature", j as u64)).context(|| "PaP".into())?;
        out.push(check("theorem1_monte_carlo", &d.names()[j], closed[j], v, Tolerance::Relative, MC_REL_TOL));
    }
    Ok(out)
}

/// Largest deviation of PD and of every ICE curve from their lines.
pub fn lines(master: u64, seeds: &mut SeedLog) -> Result<Vec<Check>, CliError> {
    let d = benchmark(LINES_N, THEOREM2_RHO, seeds, master, "theorem/lines")?;
    let (m, o) = linear(&d)?;
    let grid = default_grid();
    let rows: Vec<usize> = (0..d.n_rows()).collect();
    let mut out = Vec::new();
    for j in 0..d.n_features() {
        let pd = partial_dependence(&m, &d, j, &grid).context(|| "PD".into())?;
        let (c, s) = o.theorem1_pd_line(j);
        let pd_dev = grid.iter().zip(&pd.values[0]).map(|(g, v)| (v - (c + s * g)).abs()).fold(0.0, f64::max);
        out.push(check("theorem1_pd_line", &d.names()[j], 0.0, pd_dev, Tolerance::Absolute, LINES_TOL));
        let ice = ice_curves(&m, &d, &rows, j, &grid, None).context(|| "ICE".into())?;
        let mut ice_dev: f64 = 0.0;
        for (&r, curve) in rows.iter().zip(&ice.values) {
            let (c, s) = o.theorem1_ice_line(&d.features().row(r), j);
            for (g, v) in grid.iter().zip(curve) {
                ice_dev = ice_dev.max((v - (c + s * g)).abs());
            }
        }
        out.push(check("theorem1_ice_lines", &d.names()[j], 0.0, ice_dev, Tolerance::Absolute, LINES_TOL));
    }
    Ok(out)
}

/// Drop, refit and conditional importance against their targets, computed
/// from the fitted coefficients.
pub fn theorem2(master: u64, seeds: &mut SeedLog) -> Result<(Vec<Check>, Vec<OracleRow>), CliError> {
    let g = GeneratorConfig::benchmark(THEOREM2_N, THEOREM2_RHO, 0);
    let d = g.generate_from(seeds.derive(master, 0, "theorem/theorem2")).context(|| "theorem 2 data".into())?;
    let spec = g.copula().context(|| "copula".into())?;
    let (m, o) = linear(&d)?;
    let dep = DependenceOracle::from_dataset(&d)
        .and_then(|dep| dep.with_copula(&spec, d.features(), DEFAULT_N_MC, seeds.derive(master, 0, "theorem/theorem2/variance")))
        .context(|| "dependence oracle".into())?;
    let targets = theorem2_targets(&dep, &m.beta).context(|| "targets".into())?;
    let law = CopulaLaw::new(spec);
    let s = seeds.derive(master, 0, "theorem/theorem2/importance");
    let mut out = Vec::new();
    for j in (0..d.n_features()).filter(|&j| BENCHMARK_BETA[j] != 0.0) {
        let name = &d.names()[j];
        let t = targets[j];
        let ctx = |what: &str| format!("theorem 2 {what} for {name}");
        let drop = vi_drop(&LinearLearner, &d, j, s.child("drop", j as u64)).context(|| ctx("drop"))?;
        out.push(check("theorem2_drop", name, t.drop, drop, Tolerance::Relative, DROP_REL_TOL));
        let pr = vi_permute_relearn(&LinearLearner, &d, j, THEOREM2_REPS, s.child("perm_relearn", j as u64)).context(|| ctx("permute-relearn"))?;
        out.push(check("theorem2_permute_relearn", name, t.relearn, pr, Tolerance::Relative, REFIT_REL_TOL));
        let cr = vi_condition_relearn(&LinearLearner, &d, j, &law, THEOREM2_REPS, s.child("cond_relearn", j as u64))
            .context(|| ctx("condition-relearn"))?;
        out.push(check("theorem2_condition_relearn", name, t.relearn, cr, Tolerance::Relative, REFIT_REL_TOL));
        if let Some(target) = t.conditional {
            let c = vi_conditional(&m, &d, j, &law, THEOREM2_REPS, s.child("cond", j as u64)).context(|| ctx("conditional"))?;
            out.push(check("theorem2_conditional", name, target, c, Tolerance::Relative, REFIT_REL_TOL));
        }
    }
    Ok((out, oracle_rows(d.names(), &o, &targets)))
}

/// Training residuals of the least-squares fit against every column.
pub fn orthogonality(master: u64, seeds: &mut SeedLog) -> Result<Vec<Check>, CliError> {
    let d = benchmark(THEOREM2_N, THEOREM2_RHO, seeds, master, "theorem/orthogonality")?;
    let (m, _) = linear(&d)?;
    let pred = m.predict(d.features()).context(|| "predict".into())?;
    let n = d.n_rows() as f64;
    Ok(d
        .features()
        .columns()
        .iter()
        .zip(d.names())
        .map(|(c, name)| {
            let ip: f64 = d.response().iter().zip(&pred).zip(c).map(|((y, f), x)| (y - f) * x).sum();
            check("residual_orthogonality", name, 0.0, ip / n, Tolerance::Absolute, ORTHOGONALITY_TOL)
        })
        .collect())
}

pub fn compute(cfg: &ExperimentConfig) -> Result<TheoremResult, CliError> {
    let mut seeds = SeedLog::default();
    let master = cfg.seed;
    let mut checks = enumeration(master, &mut seeds)?;
    checks.extend(monte_carlo(master, &mut seeds)?);
    checks.extend(lines(master, &mut seeds)?);
    let (t2, oracle) = theorem2(master, &mut seeds)?;
    checks.extend(t2);
    checks.extend(orthogonality(master, &mut seeds)?);
    for c in checks.iter().filter(|c| !c.pass()) {
        log::warn!("{} {}: expected {}, observed {}", c.check, c.feature, c.expected, c.observed);
    }
    Ok(TheoremResult { checks, oracle, seeds })
}

pub fn write(res: &TheoremResult, bundle: &mut Bundle) -> Result<(), CliError> {
    res.seeds.record(bundle);
    bundle.write_csv("theorem_check.csv", "aggregate", |buf| {
        let mut wr = csv::Writer::from_writer(buf);
        wr.write_record(["check", "feature", "expected", "observed", "abs_error", "rel_error", "tolerance", "pass"])?;
        for c in &res.checks {
            let tol = match c.kind {
                Tolerance::Absolute => format!("abs {}", c.tolerance),
                Tolerance::Relative => format!("rel {}", c.tolerance),
            };
            wr.write_record([
                c.check.clone(),
                c.feature.clone(),
                c.expected.to_string(),
                c.observed.to_string(),
                c.abs_error().to_string(),
                c.rel_error().to_string(),
                tol,
                c.pass().to_string(),
            ])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    bundle.write_csv("oracle_targets.csv", "aggregate", |b| write_oracle_csv(&res.oracle, b))?;
    bundle.note("failed_checks", res.failures().to_string());
    Ok(())
}
