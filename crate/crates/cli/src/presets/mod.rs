//! One module per preset. Each exposes `compute` (pure, in memory) and
//! `write` (CSV, SVG and manifest entries); [`run`] chains the two.

use std::time::Instant;

use permdiag::dataset::Dataset;
use permdiag::importance::{ImportanceReport, Measure, RankTable};
use permdiag::learners::{ForestLearner, Learner, LinearLearner, MlpLearner, Predictor};
use permdiag::rng::derive_seed;
use permdiag::synthgen::GeneratorConfig;
use permdiag::SeededStream;

use crate::bundle::{Bundle, FileEntry, SeedEntry};
use crate::config::{ExperimentConfig, LearnerKind, Preset};
use crate::error::{CliError, Context};

pub mod fig1;
pub mod fig2;
pub mod fig3;
pub mod fig4;
pub mod fig5;
pub mod fig6;
pub mod fig7;
pub mod theorem;

/// Files written by a run, plus whether its checks passed.
#[derive(Debug)]
pub struct RunSummary {
    pub files: Vec<FileEntry>,
    pub failures: usize,
}

/// Runs `cfg` inside a pool of `jobs` threads and writes everything under
/// `cfg.out`.
pub fn run(cfg: &ExperimentConfig, jobs: usize) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let mut bundle = Bundle::create(&cfg.out)?;
    let started = Instant::now();
    let mut failures = 0;
    match cfg.preset {
        Preset::Fig1Ranks => fig1::write(&fig1::compute(cfg)?, &mut bundle)?,
        Preset::Fig2Grid => fig2::write(&fig2::compute(cfg)?, &mut bundle)?,
        Preset::Fig3Effects => fig3::write(&fig3::compute(cfg)?, &mut bundle)?,
        Preset::Fig4Contour => fig4::write(&fig4::compute(cfg)?, &mut bundle)?,
        Preset::Fig5Alternatives => fig5::write(&fig5::compute(cfg)?, &mut bundle)?,
        Preset::Fig6NnVariance => fig6::write(&fig6::compute(cfg)?, &mut bundle)?,
        Preset::Fig7Bikeshare => fig7::write(&fig7::compute(cfg)?, &mut bundle)?,
        Preset::TheoremCheck => {
            let r = theorem::compute(cfg)?;
            failures = r.failures();
            theorem::write(&r, &mut bundle)?;
        }
    }
    bundle.time("total", started.elapsed());
    let files = bundle.finish(cfg)?;
    Ok(RunSummary { files, failures })
}

/// Seed streams derived for one replicate, kept for the manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedLog(pub Vec<SeedEntry>);

impl SeedLog {
    pub fn derive(&mut self, master: u64, replicate: u64, role: &str) -> SeededStream {
        let s = derive_seed(master, replicate, role);
        self.0.push(SeedEntry {
            replicate,
            role: role.to_string(),
            seed: s.seed,
            stream: s.stream,
        });
        s
    }

    pub fn extend(&mut self, other: SeedLog) {
        self.0.extend(other.0);
    }

    pub fn record(&self, bundle: &mut Bundle) {
        for e in &self.0 {
            bundle.record_seed(e.replicate, &e.role, SeededStream::new(e.seed, e.stream));
        }
    }
}

pub fn learner(kind: LearnerKind, cfg: &ExperimentConfig) -> Box<dyn Learner> {
    match kind {
        LearnerKind::Forest => Box::new(ForestLearner(cfg.forest.clone())),
        LearnerKind::Mlp => Box::new(MlpLearner(cfg.mlp.clone())),
        LearnerKind::Linear => Box::new(LinearLearner),
    }
}

pub fn fit(kind: LearnerKind, cfg: &ExperimentConfig, d: &Dataset, seed: u64) -> permdiag::Result<Box<dyn Predictor>> {
    learner(kind, cfg).fit_model(d, seed)
}

/// The ten-feature benchmark with `n` rows and copula correlation `rho`.
pub fn benchmark_data(n: usize, rho: f64, stream: SeededStream) -> permdiag::Result<Dataset> {
    GeneratorConfig::benchmark(n, rho, 0).generate_from(stream)
}

/// Path-friendly rendering of a real parameter.
pub fn tag(v: f64) -> String {
    format!("{v}")
}

/// Mean-rank table for one (rho, learner, measure) cell of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCell {
    pub rho: f64,
    pub learner: LearnerKind,
    pub measure: Measure,
    pub table: RankTable,
}

impl RankCell {
    pub fn mean_rank_of(&self, name: &str) -> Option<f64> {
        let j = self.table.names.iter().position(|n| n == name)?;
        Some(self.table.mean_rank[j])
    }
}

/// Reports from one replicate at one rho.
#[derive(Debug, Clone)]
pub struct ReplicateReports {
    pub rho: f64,
    pub replicate: usize,
    pub reports: Vec<(LearnerKind, ImportanceReport)>,
    pub wall_seconds: f64,
}

/// Builds one [`RankCell`] per distinct (rho, learner, measure), in first
/// appearance order.
pub fn rank_cells(reps: &[ReplicateReports]) -> Result<Vec<RankCell>, CliError> {
    let mut keys: Vec<(f64, LearnerKind, Measure)> = Vec::new();
    for r in reps {
        for (l, rep) in &r.reports {
            let k = (r.rho, *l, rep.measure);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    keys.into_iter()
        .map(|(rho, l, m)| {
            let group: Vec<ImportanceReport> = reps
                .iter()
                .filter(|r| r.rho == rho)
                .flat_map(|r| r.reports.iter())
                .filter(|(k, rep)| *k == l && rep.measure == m)
                .map(|(_, rep)| rep.clone())
                .collect();
            let table = permdiag::importance::aggregate_ranks(&group).context(|| format!("aggregating {m} for {} at rho {rho}", l.id()))?;
            Ok(RankCell {
                rho,
                learner: l,
                measure: m,
                table,
            })
        })
        .collect()
}

/// CSV with columns `rho, learner, measure, feature, mean_rank`.
pub fn write_rank_cells(cells: &[RankCell], out: &mut Vec<u8>) -> permdiag::Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["rho", "learner", "measure", "feature", "mean_rank"])?;
    for c in cells {
        for (name, r) in c.table.names.iter().zip(&c.table.mean_rank) {
            wr.write_record([tag(c.rho), c.learner.id().into(), c.measure.id().into(), name.clone(), r.to_string()])?;
        }
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes every replicate's reports as `{prefix}/rho_{rho}/rep_{r:03}_{learner}.csv`.
pub fn write_replicates(prefix: &str, reps: &[ReplicateReports], bundle: &mut Bundle) -> Result<(), CliError> {
    for r in reps {
        let mut by_learner: Vec<(LearnerKind, Vec<ImportanceReport>)> = Vec::new();
        for (l, rep) in &r.reports {
            match by_learner.iter_mut().find(|(k, _)| k == l) {
                Some((_, v)) => v.push(rep.clone()),
                None => by_learner.push((*l, vec![rep.clone()])),
            }
        }
        for (l, reports) in by_learner {
            let name = format!("{prefix}/rho_{}/rep_{:03}_{}.csv", tag(r.rho), r.replicate, l.id());
            bundle.write_csv(&name, "replicate", |buf| permdiag::importance::write_reports_csv(&reports, buf))?;
        }
    }
    Ok(())
}
