//! Variable importance: permute-and-predict, out-of-bag, conditional,
//! drop-and-refit, permute-and-refit and condition-and-refit, plus rank
//! aggregation across replicates.
//!
//! Every measure is reported as degraded loss minus baseline loss, summed
//! over rows, so a feature that carries signal scores positive. Stochastic
//! measures average `n_reps` independent draws; each `(feature, rep)` pair
//! uses its own child stream, so results do not depend on how reps are
//! scheduled.

use std::fmt;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{rank_scores, sse, Dataset, Features, Permutation};
use crate::error::{Error, Result};
use crate::learners::{ForestModel, Learner, Predictor};
use crate::rng::SeededStream;
use crate::synthgen::CopulaLaw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "PaP")]
    PermutePredict,
    #[serde(rename = "OOB")]
    OutOfBag,
    #[serde(rename = "COND")]
    Conditional,
    #[serde(rename = "DROP")]
    Drop,
    #[serde(rename = "PERM_RELEARN")]
    PermuteRelearn,
    #[serde(rename = "COND_RELEARN")]
    ConditionRelearn,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::PermutePredict,
        Measure::OutOfBag,
        Measure::Conditional,
        Measure::Drop,
        Measure::PermuteRelearn,
        Measure::ConditionRelearn,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Measure::PermutePredict => "PaP",
            Measure::OutOfBag => "OOB",
            Measure::Conditional => "COND",
            Measure::Drop => "DROP",
            Measure::PermuteRelearn => "PERM_RELEARN",
            Measure::ConditionRelearn => "COND_RELEARN",
        }
    }

    pub fn from_id(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Source of draws from `x_j | x_{-j}`.
pub trait ConditionalSampler: Sync {
    /// A fresh column `j`, each entry drawn given the rest of its row.
    fn sample_column(&self, x: &Features, j: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

impl ConditionalSampler for CopulaLaw {
    fn sample_column(&self, x: &Features, j: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        CopulaLaw::sample_column(self, x, j, rng)
    }
}

/// Sampler for data with no known conditional law.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoConditional;

impl ConditionalSampler for NoConditional {
    fn sample_column(&self, _x: &Features, j: usize, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Err(Error::UnsupportedConditional(j))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub measure: Measure,
    pub names: Vec<String>,
    /// Raw sums over rows (OOB: mean over trees of per-tree sums).
    pub scores: Vec<f64>,
    pub n_reps: usize,
    pub baseline_loss: f64,
    pub seed: u64,
    pub n_rows: usize,
}

impl ImportanceReport {
    pub fn ranks(&self) -> Vec<usize> {
        rank_scores(&self.scores).expect("report scores are finite")
    }

    /// Scores divided by the row count, for display.
    pub fn normalized_scores(&self) -> Vec<f64> {
        let n = self.n_rows as f64;
        self.scores.iter().map(|s| s / n).collect()
    }

    fn validate(self) -> Result<Self> {
        if let Some(j) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("{} score for feature {j}", self.measure)));
        }
        Ok(self)
    }

    pub const CSV_HEADER: [&'static str; 6] = ["measure", "feature", "score", "rank", "n_reps", "seed"];

    /// One row per feature; no header.
    pub fn write_csv_rows<W: Write>(&self, wr: &mut csv::Writer<W>) -> Result<()> {
        let ranks = self.ranks();
        for j in 0..self.scores.len() {
            wr.write_record([
                self.measure.id().to_string(),
                self.names[j].clone(),
                self.scores[j].to_string(),
                ranks[j].to_string(),
                self.n_reps.to_string(),
                self.seed.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_reports_csv(std::slice::from_ref(self), w)
    }
}

/// Several reports in one CSV with a single header.
pub fn write_reports_csv<W: Write>(reports: &[ImportanceReport], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(ImportanceReport::CSV_HEADER)?;
    for r in reports {
        r.write_csv_rows(&mut wr)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn check_inputs(model_width: usize, d: &Dataset, j: usize, n_reps: usize) -> Result<()> {
    if model_width != d.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model_width,
            actual: d.n_features(),
        });
    }
    if j >= d.n_features() {
        return Err(Error::FeatureOutOfRange {
            index: j,
            width: d.n_features(),
        });
    }
    if n_reps == 0 {
        return Err(Error::InvalidParameter("n_reps must be >= 1".into()));
    }
    Ok(())
}

fn baseline_loss(model: &dyn Predictor, d: &Dataset) -> Result<f64> {
    Ok(sse(d.response(), &model.predict(d.features())?))
}

fn rep_stream(stream: SeededStream, role: &str, j: usize, r: usize) -> SeededStream {
    stream.child(&format!("{role}/{j}"), r as u64)
}

/// Mean over reps of `f(rep)`, evaluated in parallel and reduced in rep order.
fn mean_over_reps<F>(n_reps: usize, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    let vals: Vec<f64> = (0..n_reps).into_par_iter().map(&f).collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / n_reps as f64)
}

fn pap_with_baseline(
    model: &dyn Predictor,
    d: &Dataset,
    j: usize,
    n_reps: usize,
    stream: SeededStream,
    base: f64,
) -> Result<f64> {
    mean_over_reps(n_reps, |r| {
        let mut rng = rep_stream(stream, "pap", j, r).rng();
        let perm = Permutation::random(d.n_rows(), &mut rng);
        let xp = d.features().permute_column(j, &perm)?;
        Ok(sse(d.response(), &model.predict(&xp)?) - base)
    })
}

/// Permute-and-predict importance of feature `j`.
pub fn vi_pap(model: &dyn Predictor, d: &Dataset, j: usize, n_reps: usize, stream: SeededStream) -> Result<f64> {
    check_inputs(model.n_features(), d, j, n_reps)?;
    let base = baseline_loss(model, d)?;
    pap_with_baseline(model, d, j, n_reps, stream, base)
}

pub fn pap_report(model: &dyn Predictor, d: &Dataset, n_reps: usize, stream: SeededStream) -> Result<ImportanceReport> {
    check_inputs(model.n_features(), d, 0, n_reps)?;
    let base = baseline_loss(model, d)?;
    let scores = (0..d.n_features())
        .map(|j| pap_with_baseline(model, d, j, n_reps, stream, base))
        .collect::<Result<_>>()?;
    ImportanceReport {
        measure: Measure::PermutePredict,
        names: d.names().to_vec(),
        scores,
        n_reps,
        baseline_loss: base,
        seed: stream.seed,
        n_rows: d.n_rows(),
    }
    .validate()
}

/// Per-tree out-of-bag losses, original and with column `j` permuted among
/// the tree's OOB rows.
fn oob_tree_delta(m: &ForestModel, d: &Dataset, t: usize, j: usize, rows: &[usize], rng: &mut ChaCha8Rng) -> f64 {
    let tree = &m.trees[t];
    let x = d.features();
    let y = d.response();
    let perm = Permutation::random(rows.len(), rng);
    let mut buf = Vec::with_capacity(x.n_cols());
    let mut delta = 0.0;
    for (k, &i) in rows.iter().enumerate() {
        let orig = tree.predict_at(x, i);
        x.row_into(i, &mut buf);
        buf[j] = x.get(rows[perm.order()[k]], j);
        let permuted = tree.predict_row(&buf);
        delta += (y[i] - permuted).powi(2) - (y[i] - orig).powi(2);
    }
    delta
}

/// Out-of-bag permutation importance of feature `j` for a fitted forest.
/// Trees with no OOB rows are skipped.
pub fn vi_oob(m: &ForestModel, d: &Dataset, j: usize, n_reps: usize, stream: SeededStream) -> Result<f64> {
    check_inputs(m.n_features, d, j, n_reps)?;
    if d.n_rows() != m.n_train {
        return Err(Error::LengthMismatch {
            expected: m.n_train,
            actual: d.n_rows(),
        });
    }
    let oob: Vec<Vec<usize>> = (0..m.trees.len()).map(|t| m.oob_rows(t)).collect();
    oob_with_rows(m, d, j, n_reps, stream, &oob)
}

fn oob_with_rows(
    m: &ForestModel,
    d: &Dataset,
    j: usize,
    n_reps: usize,
    stream: SeededStream,
    oob: &[Vec<usize>],
) -> Result<f64> {
    mean_over_reps(n_reps, |r| {
        let deltas: Vec<f64> = (0..m.trees.len())
            .filter(|&t| !oob[t].is_empty())
            .map(|t| {
                let mut rng = stream.child(&format!("oob/{j}/{r}"), t as u64).rng();
                oob_tree_delta(m, d, t, j, &oob[t], &mut rng)
            })
            .collect();
        Ok(if deltas.is_empty() {
            0.0
        } else {
            deltas.iter().sum::<f64>() / deltas.len() as f64
        })
    })
}

pub fn oob_report(m: &ForestModel, d: &Dataset, n_reps: usize, stream: SeededStream) -> Result<ImportanceReport> {
    vi_oob(m, d, 0, n_reps, stream)?;
    let oob: Vec<Vec<usize>> = (0..m.trees.len()).map(|t| m.oob_rows(t)).collect();
    let scores = (0..d.n_features())
        .map(|j| oob_with_rows(m, d, j, n_reps, stream, &oob))
        .collect::<Result<_>>()?;
    let x = d.features();
    let per_tree: Vec<f64> = oob
        .iter()
        .enumerate()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(t, rows)| {
            rows.iter()
                .map(|&i| (d.response()[i] - m.trees[t].predict_at(x, i)).powi(2))
                .sum::<f64>()
        })
        .collect();
    let baseline_loss = if per_tree.is_empty() {
        0.0
    } else {
        per_tree.iter().sum::<f64>() / per_tree.len() as f64
    };
    ImportanceReport {
        measure: Measure::OutOfBag,
        names: d.names().to_vec(),
        scores,
        n_reps,
        baseline_loss,
        seed: stream.seed,
        n_rows: d.n_rows(),
    }
    .validate()
}

fn conditional_with_baseline(
    model: &dyn Predictor,
    d: &Dataset,
    j: usize,
    sampler: &dyn ConditionalSampler,
    n_reps: usize,
    stream: SeededStream,
    base: f64,
) -> Result<f64> {
    mean_over_reps(n_reps, |r| {
        let mut rng = rep_stream(stream, "cond", j, r).rng();
        let col = sampler.sample_column(d.features(), j, &mut rng)?;
        let xc = d.features().replace_column(j, &col)?;
        Ok(sse(d.response(), &model.predict(&xc)?) - base)
    })
}

/// Conditional importance: column `j` redrawn from `x_j | x_{-j}`.
pub fn vi_conditional(
    model: &dyn Predictor,
    d: &Dataset,
    j: usize,
    sampler: &dyn ConditionalSampler,
    n_reps: usize,
    stream: SeededStream,
) -> Result<f64> {
    check_inputs(model.n_features(), d, j, n_reps)?;
    let base = baseline_loss(model, d)?;
    conditional_with_baseline(model, d, j, sampler, n_reps, stream, base)
}

pub fn conditional_report(
    model: &dyn Predictor,
    d: &Dataset,
    sampler: &dyn ConditionalSampler,
    n_reps: usize,
    stream: SeededStream,
) -> Result<ImportanceReport> {
    check_inputs(model.n_features(), d, 0, n_reps)?;
    let base = baseline_loss(model, d)?;
    let scores = (0..d.n_features())
        .map(|j| conditional_with_baseline(model, d, j, sampler, n_reps, stream, base))
        .collect::<Result<_>>()?;
    ImportanceReport {
        measure: Measure::Conditional,
        names: d.names().to_vec(),
        scores,
        n_reps,
        baseline_loss: base,
        seed: stream.seed,
        n_rows: d.n_rows(),
    }
    .validate()
}

/// Baseline model for the refit measures, fit with a seed derived from
/// `stream` so that single-feature and report calls agree.
struct RefitBaseline {
    loss: f64,
}

impl RefitBaseline {
    fn fit(learner: &dyn Learner, d: &Dataset, stream: SeededStream) -> Result<Self> {
        let model = learner.fit_model(d, stream.child("baseline", 0).seed)?;
        let loss = baseline_loss(model.as_ref(), d)?;
        Ok(Self { loss })
    }
}

fn check_refit(d: &Dataset, j: usize, n_reps: usize) -> Result<()> {
    if d.n_features() < 2 {
        return Err(Error::InvalidParameter(
            "refit importance needs at least two features".into(),
        ));
    }
    check_inputs(d.n_features(), d, j, n_reps)
}

fn drop_with_baseline(learner: &dyn Learner, d: &Dataset, j: usize, stream: SeededStream, base: &RefitBaseline) -> Result<f64> {
    let reduced = d.drop_column(j)?;
    let model = learner.fit_model(&reduced, rep_stream(stream, "drop", j, 0).seed)?;
    Ok(baseline_loss(model.as_ref(), &reduced)? - base.loss)
}

/// Drop-and-refit (leave-one-covariate-out) importance on training loss.
pub fn vi_drop(learner: &dyn Learner, d: &Dataset, j: usize, stream: SeededStream) -> Result<f64> {
    check_refit(d, j, 1)?;
    let base = RefitBaseline::fit(learner, d, stream)?;
    drop_with_baseline(learner, d, j, stream, &base)
}

pub fn drop_report(learner: &dyn Learner, d: &Dataset, stream: SeededStream) -> Result<ImportanceReport> {
    check_refit(d, 0, 1)?;
    let base = RefitBaseline::fit(learner, d, stream)?;
    let scores = (0..d.n_features())
        .map(|j| drop_with_baseline(learner, d, j, stream, &base))
        .collect::<Result<_>>()?;
    ImportanceReport {
        measure: Measure::Drop,
        names: d.names().to_vec(),
        scores,
        n_reps: 1,
        baseline_loss: base.loss,
        seed: stream.seed,
        n_rows: d.n_rows(),
    }
    .validate()
}

/// Refit on `d` with column `j` replaced by `make_column(rep)`, and score the
/// refit model on the original rows.
fn relearn_with_baseline<F>(
    learner: &dyn Learner,
    d: &Dataset,
    j: usize,
    n_reps: usize,
    stream: SeededStream,
    role: &str,
    base: &RefitBaseline,
    make_column: F,
) -> Result<f64>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync,
{
    mean_over_reps(n_reps, |r| {
        let rs = rep_stream(stream, role, j, r);
        let mut rng = rs.child("column", 0).rng();
        let col = make_column(&mut rng)?;
        let altered = d.replace_column(j, &col)?;
        let model = learner.fit_model(&altered, rs.child("fit", 0).seed)?;
        Ok(baseline_loss(model.as_ref(), d)? - base.loss)
    })
}

fn permute_column_fn(d: &Dataset, j: usize) -> impl Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync + '_ {
    move |rng| Ok(Permutation::random(d.n_rows(), rng).apply(d.features().column(j)))
}

fn conditional_column_fn<'a>(
    d: &'a Dataset,
    j: usize,
    sampler: &'a dyn ConditionalSampler,
) -> impl Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync + 'a {
    move |rng| sampler.sample_column(d.features(), j, rng)
}

/// Permute-and-refit importance, evaluated on the unpermuted rows.
pub fn vi_permute_relearn(learner: &dyn Learner, d: &Dataset, j: usize, n_reps: usize, stream: SeededStream) -> Result<f64> {
    check_refit(d, j, n_reps)?;
    let base = RefitBaseline::fit(learner, d, stream)?;
    relearn_with_baseline(learner, d, j, n_reps, stream, "perm_relearn", &base, permute_column_fn(d, j))
}

pub fn permute_relearn_report(learner: &dyn Learner, d: &Dataset, n_reps: usize, stream: SeededStream) -> Result<ImportanceReport> {
    check_refit(d, 0, n_reps)?;
    permute_relearn_any_width(learner, d, n_reps, stream)
}

/// As [`permute_relearn_report`] but also accepting a single feature.
pub(crate) fn permute_relearn_any_width(
    learner: &dyn Learner,
    d: &Dataset,
    n_reps: usize,
    stream: SeededStream,
) -> Result<ImportanceReport> {
    check_inputs(d.n_features(), d, 0, n_reps)?;
    let base = RefitBaseline::fit(learner, d, stream)?;
    let scores = (0..d.n_features())
        .map(|j| relearn_with_baseline(learner, d, j, n_reps, stream, "perm_relearn", &base, permute_column_fn(d, j)))
        .collect::<Result<_>>()?;
    ImportanceReport {
        measure: Measure::PermuteRelearn,
        names: d.names().to_vec(),
        scores,
        n_reps,
        baseline_loss: base.loss,
        seed: stream.seed,
        n_rows: d.n_rows(),
    }
    .validate()
}

/// Condition-and-refit importance, evaluated on the original rows.
pub fn vi_condition_relearn(
    learner: &dyn Learner,
    d: &Dataset,
    j: usize,
    sampler: &dyn ConditionalSampler,
    n_reps: usize,
    stream: SeededStream,
) -> Result<f64> {
    check_refit(d, j, n_reps)?;
    let base = RefitBaseline::fit(learner, d, stream)?;
    relearn_with_baseline(
        learner,
        d,
        j,
        n_reps,
        stream,
        "cond_relearn",
        &base,
        conditional_column_fn(d, j, sampler),
    )
}

pub fn condition_relearn_report(
    learner: &dyn Learner,
    d: &Dataset,
    sampler: &dyn ConditionalSampler,
    n_reps: usize,
    stream: SeededStream,
) -> Result<ImportanceReport> {
    check_refit(d, 0, n_reps)?;
    let base = RefitBaseline::fit(learner, d, stream)?;
    let scores = (0..d.n_features())
        .map(|j| {
            relearn_with_baseline(
                learner,
                d,
                j,
                n_reps,
                stream,
                "cond_relearn",
                &base,
                conditional_column_fn(d, j, sampler),
            )
        })
        .collect::<Result<_>>()?;
    ImportanceReport {
        measure: Measure::ConditionRelearn,
        names: d.names().to_vec(),
        scores,
        n_reps,
        baseline_loss: base.loss,
        seed: stream.seed,
        n_rows: d.n_rows(),
    }
    .validate()
}

/// Per-replicate ranks and their feature-wise mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub measure: Measure,
    pub names: Vec<String>,
    /// `ranks[replicate][feature]`, 1 = least important.
    pub ranks: Vec<Vec<usize>>,
    pub mean_rank: Vec<f64>,
}

pub fn aggregate_ranks(reports: &[ImportanceReport]) -> Result<RankTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParameter("no reports to aggregate".into()))?;
    let p = first.scores.len();
    for r in reports {
        if r.measure != first.measure {
            return Err(Error::MixedMeasures(first.measure.to_string(), r.measure.to_string()));
        }
        if r.scores.len() != p {
            return Err(Error::LengthMismatch {
                expected: p,
                actual: r.scores.len(),
            });
        }
    }
    let ranks: Vec<Vec<usize>> = reports.iter().map(|r| rank_scores(&r.scores)).collect::<Result<_>>()?;
    let k = ranks.len() as f64;
    let mean_rank = (0..p)
        .map(|j| ranks.iter().map(|r| r[j] as f64).sum::<f64>() / k)
        .collect();
    Ok(RankTable {
        measure: first.measure,
        names: first.names.clone(),
        ranks,
        mean_rank,
    })
}

impl RankTable {
    /// CSV with columns `measure, feature, mean_rank`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["measure", "feature", "mean_rank"])?;
        for (name, r) in self.names.iter().zip(&self.mean_rank) {
            wr.write_record([self.measure.id(), name, &r.to_string()])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
