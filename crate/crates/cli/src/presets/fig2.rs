//! Average rank of the correlated pair over a grid of correlations and
//! sample sizes, with both pair coefficients lowered to 0.8.

use permdiag::importance::{oob_report, pap_report, ImportanceReport};
use permdiag::learners::{fit_forest, ForestConfig};
use permdiag::synthgen::GeneratorConfig;
use permdiag::Measure;
use rayon::prelude::*;

use super::{fit, tag, SeedLog};
use crate::bundle::Bundle;
use crate::config::{ExperimentConfig, LearnerKind};
use crate::error::{CliError, Context};
use crate::svg::{render_lines, LineSeries, Style};

pub const PAIR_BETA: f64 = 0.8;
pub const DEFAULT_RHOS: [f64; 7] = [0.0, 0.1, 0.25, 0.35, 0.5, 0.75, 0.9];
pub const DESK_NS: [usize; 3] = [100, 500, 2000];
pub const FULL_NS: [usize; 6] = [100, 200, 500, 1000, 2000, 5000];

/// Mean over replicates and over x1, x2 of their importance rank.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub rho: f64,
    pub n: usize,
    pub learner: LearnerKind,
    pub measure: Measure,
    pub mean_rank_x1: f64,
    pub mean_rank_x2: f64,
}

impl GridPoint {
    pub fn pair_mean(&self) -> f64 {
        0.5 * (self.mean_rank_x1 + self.mean_rank_x2)
    }
}

#[derive(Debug, Clone)]
pub struct Fig2Result {
    pub points: Vec<GridPoint>,
    pub seeds: SeedLog,
}

fn data_config(n: usize, rho: f64) -> GeneratorConfig {
    let mut g = GeneratorConfig::benchmark(n, rho, 0);
    g.beta[0] = PAIR_BETA;
    g.beta[1] = PAIR_BETA;
    g
}

type Cell = (LearnerKind, ImportanceReport);

fn replicate(cfg: &ExperimentConfig, n: usize, rho: f64, r: usize) -> Result<(Vec<Cell>, SeedLog), CliError> {
    let mut seeds = SeedLog::default();
    let ctx = |what: &str| format!("fig2 n {n} rho {rho} replicate {r}: {what}");
    let d = data_config(n, rho)
        .generate_from(seeds.derive(cfg.seed, r as u64, &format!("data/n={n}")))
        .context(|| ctx("data"))?;
    let role = |l: &str, what: &str| format!("{what}/{l}/n={n}/rho={}", tag(rho));
    let mut out = Vec::new();
    for l in cfg.learners_or(&[LearnerKind::Forest, LearnerKind::Mlp]) {
        let fit_seed = seeds.derive(cfg.seed, r as u64, &role(l.id(), "fit")).seed;
        let imp = seeds.derive(cfg.seed, r as u64, &role(l.id(), "importance"));
        if l == LearnerKind::Forest {
            let m = fit_forest(
                &d,
                &ForestConfig {
                    seed: fit_seed,
                    ..cfg.forest.clone()
                },
            )
            .context(|| ctx("forest"))?;
            out.push((l, pap_report(&m, &d, cfg.perm_reps(), imp.child("pap", 0)).context(|| ctx("PaP"))?));
            out.push((l, oob_report(&m, &d, cfg.perm_reps(), imp.child("oob", 0)).context(|| ctx("OOB"))?));
        } else {
            let m = fit(l, cfg, &d, fit_seed).context(|| ctx(l.id()))?;
            out.push((l, pap_report(m.as_ref(), &d, cfg.perm_reps(), imp.child("pap", 0)).context(|| ctx("PaP"))?));
        }
    }
    Ok((out, seeds))
}

pub fn compute(cfg: &ExperimentConfig) -> Result<Fig2Result, CliError> {
    let reps = cfg.reps_or(5, 20);
    let ns = cfg
        .ns
        .clone()
        .or_else(|| cfg.n.map(|n| vec![n]))
        .unwrap_or_else(|| if cfg.full { FULL_NS.to_vec() } else { DESK_NS.to_vec() });
    let rhos = cfg.rhos_or(&DEFAULT_RHOS);
    let mut jobs = Vec::new();
    for &n in &ns {
        for &rho in &rhos {
            for r in 0..reps {
                jobs.push((n, rho, r));
            }
        }
    }
    let results: Vec<(Vec<Cell>, SeedLog)> = jobs
        .par_iter()
        .map(|&(n, rho, r)| replicate(cfg, n, rho, r))
        .collect::<Result<_, _>>()?;
    let mut seeds = SeedLog::default();
    let mut points: Vec<GridPoint> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for (&(n, rho, _), (cells, s)) in jobs.iter().zip(results) {
        seeds.extend(s);
        for (l, rep) in cells {
            let ranks = rep.ranks();
            let idx = match points
                .iter()
                .position(|p| p.n == n && p.rho == rho && p.learner == l && p.measure == rep.measure)
            {
                Some(i) => i,
                None => {
                    points.push(GridPoint {
                        rho,
                        n,
                        learner: l,
                        measure: rep.measure,
                        mean_rank_x1: 0.0,
                        mean_rank_x2: 0.0,
                    });
                    counts.push(0);
                    points.len() - 1
                }
            };
            points[idx].mean_rank_x1 += ranks[0] as f64;
            points[idx].mean_rank_x2 += ranks[1] as f64;
            counts[idx] += 1;
        }
    }
    for (p, &c) in points.iter_mut().zip(&counts) {
        p.mean_rank_x1 /= c as f64;
        p.mean_rank_x2 /= c as f64;
    }
    Ok(Fig2Result { points, seeds })
}

pub fn write(res: &Fig2Result, bundle: &mut Bundle) -> Result<(), CliError> {
    res.seeds.record(bundle);
    bundle.write_csv("pair_ranks.csv", "aggregate", |buf| {
        let mut wr = csv::Writer::from_writer(buf);
        wr.write_record(["rho", "n", "learner", "measure", "mean_rank_x1", "mean_rank_x2", "mean_rank_pair"])?;
        for p in &res.points {
            wr.write_record([
                tag(p.rho),
                p.n.to_string(),
                p.learner.id().to_string(),
                p.measure.id().to_string(),
                p.mean_rank_x1.to_string(),
                p.mean_rank_x2.to_string(),
                p.pair_mean().to_string(),
            ])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    // one panel per (learner, measure): pair rank against n, a line per rho
    let mut panels: Vec<(LearnerKind, Measure)> = Vec::new();
    for p in &res.points {
        if !panels.contains(&(p.learner, p.measure)) {
            panels.push((p.learner, p.measure));
        }
    }
    for (l, m) in panels {
        let mut rhos: Vec<f64> = Vec::new();
        for p in res.points.iter().filter(|p| p.learner == l && p.measure == m) {
            if !rhos.contains(&p.rho) {
                rhos.push(p.rho);
            }
        }
        let series: Vec<LineSeries> = rhos
            .iter()
            .map(|&rho| {
                let pts: Vec<&GridPoint> = res
                    .points
                    .iter()
                    .filter(|p| p.learner == l && p.measure == m && p.rho == rho)
                    .collect();
                LineSeries {
                    label: format!("rho = {rho}"),
                    x: pts.iter().map(|p| (p.n as f64).ln()).collect(),
                    y: pts.iter().map(|p| p.pair_mean()).collect(),
                    supported: vec![true; pts.len()],
                    width: 1.5,
                }
            })
            .collect();
        let svg = render_lines(
            &series,
            &Style::titled(format!("{} {}: mean rank of x1, x2 against ln n", l.id(), m.id())),
        )?;
        bundle.write(&format!("pair_rank_{}_{}.svg", l.id(), m.id()), "figure", svg.as_bytes())?;
    }
    Ok(())
}
