//! Forest predictions over the unit square when only x1 matters and the two
//! features are strongly dependent, plus the geometry of permuted queries.

use permdiag::dataset::{Dataset, Permutation};
use permdiag::effects::{prediction_grid, GridField, DEFAULT_FIELD_POINTS};
use permdiag::importance::pap_report;
use permdiag::learners::{fit_forest, ForestConfig, ForestModel, Predictor};
use permdiag::synthgen::GeneratorConfig;
use rayon::prelude::*;

use super::{tag, SeedLog};
use crate::bundle::Bundle;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Context};
use crate::svg::{render_field, FieldLayer, Style};

pub const DEFAULT_N: usize = 200;
pub const DEFAULT_RHO: f64 = 0.9;
pub const NOISE_SD: f64 = 0.05;
pub const PAP_REPLICATES: usize = 10;
pub const PAP_RHOS: [f64; 2] = [0.0, 0.9];
/// Off-manifold query whose leaf co-members are reported.
pub const QUERY: [f64; 2] = [0.85, 0.15];

/// `y = x1 + eps` on a correlated pair.
pub fn contour_config(n: usize, rho: f64) -> GeneratorConfig {
    GeneratorConfig {
        n,
        p: 2,
        rho,
        pair: (0, 1),
        beta0: 0.0,
        beta: vec![1.0, 0.0],
        sigma: NOISE_SD,
        seed: 0,
    }
}

/// The single training set shared by the forest and network fields.
pub fn contour_data(cfg: &ExperimentConfig, seeds: &mut SeedLog) -> Result<Dataset, CliError> {
    let rho = cfg.rhos.as_ref().and_then(|r| r.first().copied()).unwrap_or(DEFAULT_RHO);
    contour_config(cfg.n_or(DEFAULT_N), rho)
        .generate_from(seeds.derive(cfg.seed, 0, "contour/data"))
        .context(|| "contour data".into())
}

pub fn field_resolution(cfg: &ExperimentConfig) -> usize {
    cfg.resolution.unwrap_or(DEFAULT_FIELD_POINTS)
}

/// Averages the models' predictions over `[0, 1]^2`.
pub fn mean_field(models: &[&dyn Predictor], d: &Dataset, res: usize) -> Result<GridField, CliError> {
    let pts = (0..d.n_rows())
        .map(|i| [d.features().get(i, 0), d.features().get(i, 1)])
        .collect();
    Ok(prediction_grid(models, &[(0.0, 1.0), (0.0, 1.0)], &[res, res])
        .context(|| "prediction grid".into())?
        .with_training_points(pts))
}

/// Number of trees in which a training row shares the query's leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Comember {
    pub row: usize,
    pub x: [f64; 2],
    pub tree_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PapDraw {
    pub rho: f64,
    pub replicate: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Fig4Result {
    pub data: Dataset,
    pub field: GridField,
    pub comembers: Vec<Comember>,
    /// `(x1[perm], x2)` for one permutation of x1.
    pub permuted: Vec<[f64; 2]>,
    pub pap: Vec<PapDraw>,
    pub seeds: SeedLog,
}

impl Fig4Result {
    /// Mean absolute deviation of the averaged forest from `x1` over cells
    /// with `|x1 - x2| > 0.5` and over cells with `|x1 - x2| <= 0.1`.
    pub fn extrapolation_error(&self) -> (f64, f64) {
        let dev = |x1: f64, _: f64, m: f64, _: f64| (m - x1).abs();
        let off = self.field.average_where(|a, b| (a - b).abs() > 0.5, dev).unwrap_or(f64::NAN);
        let on = self.field.average_where(|a, b| (a - b).abs() <= 0.1, dev).unwrap_or(f64::NAN);
        (off, on)
    }

    /// Mean PaP score of feature `j` over the replicates at `rho`.
    pub fn mean_pap(&self, rho: f64, j: usize) -> Option<f64> {
        let v: Vec<f64> = self.pap.iter().filter(|p| p.rho == rho).map(|p| p.scores[j]).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn forests(cfg: &ExperimentConfig, d: &Dataset, seeds: &mut SeedLog, reps: usize) -> Result<Vec<ForestModel>, CliError> {
    let fit_seeds: Vec<u64> = (0..reps).map(|r| seeds.derive(cfg.seed, r as u64, "contour/forest").seed).collect();
    fit_seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| {
            fit_forest(
                d,
                &ForestConfig {
                    seed,
                    ..cfg.forest.clone()
                },
            )
            .context(|| format!("contour forest {r}"))
        })
        .collect()
}

fn comembers(m: &ForestModel, d: &Dataset) -> Result<Vec<Comember>, CliError> {
    let mut counts = vec![0usize; d.n_rows()];
    for rows in m.leaf_comembers(&QUERY).context(|| "leaf co-members".into())? {
        let mut rows = rows;
        rows.sort_unstable();
        rows.dedup();
        for i in rows {
            counts[i as usize] += 1;
        }
    }
    Ok(counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(row, &tree_count)| Comember {
            row,
            x: [d.features().get(row, 0), d.features().get(row, 1)],
            tree_count,
        })
        .collect())
}

fn pap_draws(cfg: &ExperimentConfig, seeds: &mut SeedLog) -> Result<Vec<PapDraw>, CliError> {
    let n = cfg.n_or(DEFAULT_N);
    let mut jobs = Vec::new();
    for &rho in &PAP_RHOS {
        for r in 0..PAP_REPLICATES {
            let data = seeds.derive(cfg.seed, r as u64, &format!("contour/pap/data/rho={}", tag(rho)));
            let fit = seeds.derive(cfg.seed, r as u64, &format!("contour/pap/fit/rho={}", tag(rho)));
            let imp = seeds.derive(cfg.seed, r as u64, &format!("contour/pap/importance/rho={}", tag(rho)));
            jobs.push((rho, r, data, fit, imp));
        }
    }
    jobs.par_iter()
        .map(|&(rho, r, data, fit, imp)| {
            let ctx = |what: &str| format!("contour PaP rho {rho} replicate {r}: {what}");
            let d = contour_config(n, rho).generate_from(data).context(|| ctx("data"))?;
            let m = fit_forest(
                &d,
                &ForestConfig {
                    seed: fit.seed,
                    ..cfg.forest.clone()
                },
            )
            .context(|| ctx("forest"))?;
            let rep = pap_report(&m, &d, cfg.perm_reps(), imp).context(|| ctx("PaP"))?;
            Ok(PapDraw {
                rho,
                replicate: r,
                scores: rep.scores,
            })
        })
        .collect()
}

pub fn compute(cfg: &ExperimentConfig) -> Result<Fig4Result, CliError> {
    let mut seeds = SeedLog::default();
    let data = contour_data(cfg, &mut seeds)?;
    let models = forests(cfg, &data, &mut seeds, cfg.reps_or(30, 100))?;
    let refs: Vec<&dyn Predictor> = models.iter().map(|m| m as &dyn Predictor).collect();
    let field = mean_field(&refs, &data, field_resolution(cfg))?;
    let comembers = comembers(&models[0], &data)?;
    let mut rng = seeds.derive(cfg.seed, 0, "contour/permutation").rng();
    let perm = Permutation::random(data.n_rows(), &mut rng);
    let x1 = perm.apply(data.features().column(0));
    let permuted = x1.iter().zip(data.features().column(1)).map(|(&a, &b)| [a, b]).collect();
    let pap = pap_draws(cfg, &mut seeds)?;
    Ok(Fig4Result {
        data,
        field,
        comembers,
        permuted,
        pap,
        seeds,
    })
}

/// Shared by the forest and network presets.
pub fn write_field(field: &GridField, label: &str, bundle: &mut Bundle) -> Result<(), CliError> {
    bundle.write_csv("field.csv", "aggregate", |b| field.write_csv(b))?;
    let mean = render_field(field, FieldLayer::Mean, &Style::titled(format!("{label}: mean prediction")))?;
    bundle.write("field_mean.svg", "figure", mean.as_bytes())?;
    let sd = render_field(field, FieldLayer::Sd, &Style::titled(format!("{label}: sd across fits")))?;
    bundle.write("field_sd.svg", "figure", sd.as_bytes())?;
    Ok(())
}

pub fn write_points(name: &str, pts: &[[f64; 2]], bundle: &mut Bundle) -> Result<(), CliError> {
    bundle.write_csv(name, "aggregate", |buf| {
        let mut wr = csv::Writer::from_writer(buf);
        wr.write_record(["x1", "x2"])?;
        for p in pts {
            wr.write_record([p[0].to_string(), p[1].to_string()])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    })
}

pub fn write(res: &Fig4Result, bundle: &mut Bundle) -> Result<(), CliError> {
    res.seeds.record(bundle);
    bundle.write_csv("training_data.csv", "input", |b| res.data.write_csv(b))?;
    write_field(&res.field, "forest", bundle)?;
    write_points("training_points.csv", &res.field.training_points, bundle)?;
    write_points("permuted_points.csv", &res.permuted, bundle)?;
    bundle.write_csv("comembers.csv", "aggregate", |buf| {
        let mut wr = csv::Writer::from_writer(buf);
        wr.write_record(["query_x1", "query_x2", "row", "x1", "x2", "tree_count"])?;
        for c in &res.comembers {
            wr.write_record([
                QUERY[0].to_string(),
                QUERY[1].to_string(),
                c.row.to_string(),
                c.x[0].to_string(),
                c.x[1].to_string(),
                c.tree_count.to_string(),
            ])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    bundle.write_csv("pap.csv", "aggregate", |buf| {
        let mut wr = csv::Writer::from_writer(buf);
        wr.write_record(["rho", "replicate", "feature", "score"])?;
        for p in &res.pap {
            for (name, s) in res.data.names().iter().zip(&p.scores) {
                wr.write_record([tag(p.rho), p.replicate.to_string(), name.clone(), s.to_string()])?;
            }
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    let (off, on) = res.extrapolation_error();
    bundle.note("off_manifold_abs_error", off.to_string());
    bundle.note("on_manifold_abs_error", on.to_string());
    Ok(())
}
