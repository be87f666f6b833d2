//! Mean ranks under the conditional and refitting measures, which avoid
//! querying the model far from the training data.

use std::time::Instant;

use permdiag::importance::{condition_relearn_report, conditional_report, drop_report, permute_relearn_report};
use permdiag::synthgen::{CopulaLaw, CopulaSpec};
use rayon::prelude::*;

use super::{benchmark_data, fit, learner, rank_cells, tag, write_rank_cells, write_replicates, RankCell, ReplicateReports, SeedLog};
use crate::bundle::Bundle;
use crate::config::{ExperimentConfig, LearnerKind};
use crate::error::{CliError, Context};
use crate::svg::{render_rank_scatter, RankSeries, Style};

pub const DEFAULT_N: usize = 200;
pub const DEFAULT_RHOS: [f64; 2] = [0.0, 0.9];
pub const DEFAULT_LEARNERS: [LearnerKind; 3] = [LearnerKind::Forest, LearnerKind::Mlp, LearnerKind::Linear];

#[derive(Debug, Clone)]
pub struct Fig5Result {
    pub cells: Vec<RankCell>,
    pub replicates: Vec<ReplicateReports>,
    pub seeds: SeedLog,
}

impl Fig5Result {
    pub fn cell(&self, rho: f64, learner: LearnerKind, measure: permdiag::Measure) -> Option<&RankCell> {
        self.cells
            .iter()
            .find(|c| c.rho == rho && c.learner == learner && c.measure == measure)
    }
}

pub fn replicate(cfg: &ExperimentConfig, n: usize, rho: f64, r: usize, learners: &[LearnerKind]) -> Result<(ReplicateReports, SeedLog), CliError> {
    let started = Instant::now();
    let mut seeds = SeedLog::default();
    let ctx = |what: &str| format!("alternatives rho {rho} replicate {r}: {what}");
    let d = benchmark_data(n, rho, seeds.derive(cfg.seed, r as u64, "data")).context(|| ctx("data"))?;
    let law = CopulaLaw::new(CopulaSpec::first_pair(d.n_features(), rho).context(|| ctx("copula"))?);
    let k = cfg.perm_reps();
    let mut reports = Vec::new();
    for &l in learners {
        let role = |what: &str| format!("{what}/{}/rho={}", l.id(), tag(rho));
        let fit_seed = seeds.derive(cfg.seed, r as u64, &role("fit")).seed;
        let imp = seeds.derive(cfg.seed, r as u64, &role("importance"));
        let m = fit(l, cfg, &d, fit_seed).context(|| ctx(l.id()))?;
        let ln = learner(l, cfg);
        let ln = ln.as_ref();
        let with = |what: &str| ctx(&format!("{} {what}", l.id()));
        reports.push((l, conditional_report(m.as_ref(), &d, &law, k, imp.child("cond", 0)).context(|| with("COND"))?));
        reports.push((l, drop_report(ln, &d, imp.child("drop", 0)).context(|| with("DROP"))?));
        reports.push((l, permute_relearn_report(ln, &d, k, imp.child("perm_relearn", 0)).context(|| with("PERM_RELEARN"))?));
        reports.push((l, condition_relearn_report(ln, &d, &law, k, imp.child("cond_relearn", 0)).context(|| with("COND_RELEARN"))?));
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

pub fn compute(cfg: &ExperimentConfig) -> Result<Fig5Result, CliError> {
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
    Ok(Fig5Result {
        cells: rank_cells(&replicates)?,
        replicates,
        seeds,
    })
}

pub fn write(res: &Fig5Result, bundle: &mut Bundle) -> Result<(), CliError> {
    res.seeds.record(bundle);
    write_replicates("replicates", &res.replicates, bundle)?;
    bundle.write_csv("mean_ranks.csv", "aggregate", |b| write_rank_cells(&res.cells, b))?;
    let mut panels: Vec<(f64, permdiag::Measure)> = Vec::new();
    for c in &res.cells {
        if !panels.contains(&(c.rho, c.measure)) {
            panels.push((c.rho, c.measure));
        }
    }
    for (rho, m) in panels {
        let series: Vec<RankSeries> = res
            .cells
            .iter()
            .filter(|c| c.rho == rho && c.measure == m)
            .map(|c| RankSeries {
                label: c.learner.id().to_string(),
                marker: c.learner.marker(),
                names: c.table.names.clone(),
                mean_rank: c.table.mean_rank.clone(),
            })
            .collect();
        let svg = render_rank_scatter(&series, &Style::titled(format!("{} mean rank, rho = {rho}", m.id())))?;
        bundle.write(&format!("ranks_{}_rho_{}.svg", m.id(), tag(rho)), "figure", svg.as_bytes())?;
    }
    for r in &res.replicates {
        bundle.time(&format!("rho_{}/rep_{:03}", tag(r.rho), r.replicate), std::time::Duration::from_secs_f64(r.wall_seconds));
    }
    Ok(())
}
