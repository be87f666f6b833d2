//! Mean permutation-importance ranks on the ten-feature benchmark for each
//! learner, at independent and correlated designs.

use std::time::Instant;

use permdiag::importance::{oob_report, pap_report};
use permdiag::learners::{fit_forest, ForestConfig};
use rayon::prelude::*;

use super::{benchmark_data, fit, rank_cells, tag, write_rank_cells, write_replicates, RankCell, ReplicateReports, SeedLog};
use crate::bundle::Bundle;
use crate::config::{ExperimentConfig, LearnerKind};
use crate::error::{CliError, Context};
use crate::svg::{render_rank_scatter, RankSeries, Style};

pub const DEFAULT_N: usize = 2000;
pub const DEFAULT_RHOS: [f64; 2] = [0.0, 0.9];
pub const DEFAULT_LEARNERS: [LearnerKind; 3] = [LearnerKind::Forest, LearnerKind::Mlp, LearnerKind::Linear];

#[derive(Debug, Clone)]
pub struct Fig1Result {
    pub cells: Vec<RankCell>,
    pub replicates: Vec<ReplicateReports>,
    pub seeds: SeedLog,
}

impl Fig1Result {
    pub fn cell(&self, rho: f64, learner: LearnerKind, measure: permdiag::Measure) -> Option<&RankCell> {
        self.cells
            .iter()
            .find(|c| c.rho == rho && c.learner == learner && c.measure == measure)
    }
}

/// PaP for every learner, plus OOB for the forest, on one replicate.
pub fn replicate(cfg: &ExperimentConfig, n: usize, rho: f64, r: usize, learners: &[LearnerKind]) -> Result<(ReplicateReports, SeedLog), CliError> {
    let started = Instant::now();
    let mut seeds = SeedLog::default();
    let ctx = |what: &str| format!("fig1 rho {rho} replicate {r}: {what}");
    // the data stream does not depend on rho, so designs share draws
    let data_stream = seeds.derive(cfg.seed, r as u64, "data");
    let d = benchmark_data(n, rho, data_stream).context(|| ctx("data"))?;
    let mut reports = Vec::new();
    for &l in learners {
        let fit_seed = seeds.derive(cfg.seed, r as u64, &format!("fit/{}/rho={}", l.id(), tag(rho))).seed;
        let imp = seeds.derive(cfg.seed, r as u64, &format!("importance/{}/rho={}", l.id(), tag(rho)));
        if l == LearnerKind::Forest {
            let fc = ForestConfig {
                seed: fit_seed,
                ..cfg.forest.clone()
            };
            let m = fit_forest(&d, &fc).context(|| ctx("forest"))?;
            reports.push((l, pap_report(&m, &d, cfg.perm_reps(), imp.child("pap", 0)).context(|| ctx("forest PaP"))?));
            reports.push((l, oob_report(&m, &d, cfg.perm_reps(), imp.child("oob", 0)).context(|| ctx("forest OOB"))?));
        } else {
            let m = fit(l, cfg, &d, fit_seed).context(|| ctx(l.id()))?;
            reports.push((l, pap_report(m.as_ref(), &d, cfg.perm_reps(), imp.child("pap", 0)).context(|| ctx("PaP"))?));
        }
    }
    Ok((
        ReplicateReports {
            rho,
            replicate: r,
            reports,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
        seeds,
    ))
}

pub fn compute(cfg: &ExperimentConfig) -> Result<Fig1Result, CliError> {
    let n = cfg.n_or(DEFAULT_N);
    let reps = cfg.reps_or(10, 50);
    let learners = cfg.learners_or(&DEFAULT_LEARNERS);
    let rhos = cfg.rhos_or(&DEFAULT_RHOS);
    let jobs: Vec<(f64, usize)> = rhos.iter().flat_map(|&rho| (0..reps).map(move |r| (rho, r))).collect();
    let out: Vec<(ReplicateReports, SeedLog)> = jobs
        .par_iter()
        .map(|&(rho, r)| replicate(cfg, n, rho, r, &learners))
        .collect::<Result<_, _>>()?;
    let mut seeds = SeedLog::default();
    let mut replicates = Vec::new();
    for (rep, s) in out {
        replicates.push(rep);
        seeds.extend(s);
    }
    Ok(Fig1Result {
        cells: rank_cells(&replicates)?,
        replicates,
        seeds,
    })
}

pub fn rank_series(cells: &[RankCell], rho: f64) -> Vec<RankSeries> {
    cells
        .iter()
        .filter(|c| c.rho == rho)
        .map(|c| RankSeries {
            label: format!("{} {}", c.learner.id(), c.measure.id()),
            marker: if c.measure == permdiag::Measure::OutOfBag { 'o' } else { c.learner.marker() },
            names: c.table.names.clone(),
            mean_rank: c.table.mean_rank.clone(),
        })
        .collect()
}

pub fn write(res: &Fig1Result, bundle: &mut Bundle) -> Result<(), CliError> {
    res.seeds.record(bundle);
    write_replicates("replicates", &res.replicates, bundle)?;
    bundle.write_csv("mean_ranks.csv", "aggregate", |b| write_rank_cells(&res.cells, b))?;
    let mut rhos: Vec<f64> = Vec::new();
    for c in &res.cells {
        if !rhos.contains(&c.rho) {
            rhos.push(c.rho);
        }
    }
    for rho in rhos {
        let svg = render_rank_scatter(&rank_series(&res.cells, rho), &Style::titled(format!("mean importance rank, rho = {rho}")))?;
        bundle.write(&format!("ranks_rho_{}.svg", tag(rho)), "figure", svg.as_bytes())?;
    }
    for r in &res.replicates {
        bundle.time(&format!("rho_{}/rep_{:03}", tag(r.rho), r.replicate), std::time::Duration::from_secs_f64(r.wall_seconds));
    }
    Ok(())
}
