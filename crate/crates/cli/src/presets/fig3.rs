//! Partial dependence and ICE curves of x1 averaged over replicates, with
//! ICE support masks from the copula's conditional range.

use permdiag::dataset::{Dataset, Features};
use permdiag::effects::{ice_curves, linspace, partial_dependence, support_mask, CopulaSupport, EffectCurve};
use permdiag::synthgen::{CopulaLaw, CopulaSpec};
use rand::Rng;
use rayon::prelude::*;

use super::{benchmark_data, fit, tag, SeedLog};
use crate::bundle::Bundle;
use crate::config::{ExperimentConfig, LearnerKind};
use crate::error::{CliError, Context};
use crate::svg::{render_lines, LineSeries, Style};

pub const DEFAULT_N: usize = 2000;
pub const DEFAULT_RHOS: [f64; 2] = [0.0, 0.9];
pub const DEFAULT_LEARNERS: [LearnerKind; 2] = [LearnerKind::Forest, LearnerKind::Mlp];
pub const ICE_ROWS: usize = 11;
pub const FEATURE: usize = 0;

/// Averaged curves for one (rho, learner).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectCell {
    pub rho: f64,
    pub learner: LearnerKind,
    pub pd: EffectCurve,
    /// Standard deviation of the PD curve across replicates.
    pub pd_sd: Vec<f64>,
    pub ice: EffectCurve,
}

#[derive(Debug, Clone)]
pub struct Fig3Result {
    pub reference: Dataset,
    pub cells: Vec<EffectCell>,
    pub seeds: SeedLog,
}

/// The 11 ICE rows: x1 = x2 = i/10, every other feature a seeded uniform
/// draw shared by all replicates.
pub fn reference_rows(p: usize, seeds: &mut SeedLog, master: u64) -> permdiag::Result<Dataset> {
    let mut rng = seeds.derive(master, 0, "reference_rows").rng();
    let rows: Vec<Vec<f64>> = (0..ICE_ROWS)
        .map(|i| {
            let v = i as f64 / 10.0;
            (0..p).map(|j| if j < 2 { v } else { rng.random::<f64>() }).collect()
        })
        .collect();
    Dataset::with_default_names(Features::from_rows(&rows)?, vec![0.0; ICE_ROWS])
}

fn mean_curve(curves: &[EffectCurve]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = curves.len() as f64;
    let (rows, cols) = (curves[0].values.len(), curves[0].grid.len());
    let mut mean = vec![vec![0.0; cols]; rows];
    for c in curves {
        for (m, v) in mean.iter_mut().zip(&c.values) {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b / k;
            }
        }
    }
    let mut sd = vec![0.0; cols];
    if curves.len() > 1 {
        for (g, s) in sd.iter_mut().enumerate() {
            let var = curves.iter().map(|c| (c.values[0][g] - mean[0][g]).powi(2)).sum::<f64>() / (k - 1.0);
            *s = var.sqrt();
        }
    }
    (mean, sd)
}

pub fn compute(cfg: &ExperimentConfig) -> Result<Fig3Result, CliError> {
    let n = cfg.n_or(DEFAULT_N);
    let reps = cfg.reps_or(10, 50);
    let rhos = cfg.rhos_or(&DEFAULT_RHOS);
    let learners = cfg.learners_or(&DEFAULT_LEARNERS);
    let grid = linspace(0.0, 1.0, cfg.resolution.unwrap_or(permdiag::effects::DEFAULT_CURVE_POINTS));
    let mut seeds = SeedLog::default();
    let reference = reference_rows(10, &mut seeds, cfg.seed).context(|| "fig3 reference rows".into())?;
    let ref_ids: Vec<usize> = (0..ICE_ROWS).collect();

    let mut jobs = Vec::new();
    for &rho in &rhos {
        for r in 0..reps {
            jobs.push((rho, r));
        }
    }
    type RepCurves = Vec<(LearnerKind, EffectCurve, EffectCurve)>;
    let results: Vec<(RepCurves, SeedLog)> = jobs
        .par_iter()
        .map(|&(rho, r)| {
            let mut s = SeedLog::default();
            let ctx = |what: &str| format!("fig3 rho {rho} replicate {r}: {what}");
            let d = benchmark_data(n, rho, s.derive(cfg.seed, r as u64, "data")).context(|| ctx("data"))?;
            let mut out = Vec::new();
            for &l in &learners {
                let seed = s.derive(cfg.seed, r as u64, &format!("fit/{}/rho={}", l.id(), tag(rho))).seed;
                let m = fit(l, cfg, &d, seed).context(|| ctx(l.id()))?;
                let pd = partial_dependence(m.as_ref(), &d, FEATURE, &grid).context(|| ctx("PD"))?;
                let ice = ice_curves(m.as_ref(), &reference, &ref_ids, FEATURE, &grid, None).context(|| ctx("ICE"))?;
                out.push((l, pd, ice));
            }
            Ok((out, s))
        })
        .collect::<Result<_, CliError>>()?;

    let mut grouped: Vec<(f64, LearnerKind, Vec<EffectCurve>, Vec<EffectCurve>)> = Vec::new();
    for (&(rho, _), (curves, s)) in jobs.iter().zip(results) {
        seeds.extend(s);
        for (l, pd, ice) in curves {
            match grouped.iter_mut().find(|g| g.0 == rho && g.1 == l) {
                Some(g) => {
                    g.2.push(pd);
                    g.3.push(ice);
                }
                None => grouped.push((rho, l, vec![pd], vec![ice])),
            }
        }
    }
    let mut cells = Vec::new();
    for (rho, l, pds, ices) in grouped {
        let (pd_mean, pd_sd) = mean_curve(&pds);
        let (ice_mean, _) = mean_curve(&ices);
        let support = CopulaSupport::new(CopulaLaw::new(CopulaSpec::first_pair(10, rho).context(|| "fig3 copula".into())?));
        let (mask, warnings) = support_mask(reference.features(), FEATURE, &grid, Some(&support));
        let mut pd = pds[0].clone();
        pd.values = pd_mean;
        let mut ice = ices[0].clone();
        ice.values = ice_mean;
        ice.support = mask;
        ice.warnings = warnings;
        cells.push(EffectCell {
            rho,
            learner: l,
            pd,
            pd_sd,
            ice,
        });
    }
    Ok(Fig3Result { reference, cells, seeds })
}

pub fn write(res: &Fig3Result, bundle: &mut Bundle) -> Result<(), CliError> {
    res.seeds.record(bundle);
    bundle.write_csv("reference_rows.csv", "input", |b| res.reference.write_csv(b))?;
    bundle.write_csv("pd.csv", "aggregate", |buf| {
        let mut wr = csv::Writer::from_writer(buf);
        wr.write_record(["rho", "learner", "grid_value", "mean", "sd"])?;
        for c in &res.cells {
            for ((g, m), s) in c.pd.grid.iter().zip(&c.pd.values[0]).zip(&c.pd_sd) {
                wr.write_record([tag(c.rho), c.learner.id().to_string(), g.to_string(), m.to_string(), s.to_string()])?;
            }
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    for c in &res.cells {
        let stem = format!("{}_rho_{}", c.learner.id(), tag(c.rho));
        bundle.write_csv(&format!("ice_{stem}.csv"), "aggregate", |b| c.ice.write_csv(b))?;
        let mut series = LineSeries::from_curve(&c.ice, "ICE", 1.0);
        series.extend(LineSeries::from_curve(&c.pd, "PD", 2.5));
        let svg = render_lines(&series, &Style::titled(format!("{}: PD and ICE of x1, rho = {}", c.learner.id(), c.rho)))?;
        bundle.write(&format!("effects_{stem}.svg"), "figure", svg.as_bytes())?;
    }
    Ok(())
}
