//! Out-of-bag versus permute-and-relearn ranks on the hourly bike-share data.

use permdiag::bikeshare::{load_bikeshare, rank_comparison, subsample, BikeShareConfig, RankComparison, DEFAULT_SUBSAMPLE};
use permdiag::dataset::Dataset;

use super::SeedLog;
use crate::bundle::Bundle;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Context};
use crate::svg::{render_rank_scatter, RankSeries, Style};

#[derive(Debug, Clone)]
pub struct Fig7Result {
    /// Rows in the file before subsampling.
    pub source_rows: usize,
    pub data: Dataset,
    pub comparison: RankComparison,
    pub seeds: SeedLog,
}

pub fn compute(cfg: &ExperimentConfig) -> Result<Fig7Result, CliError> {
    let section = cfg
        .bikeshare
        .as_ref()
        .ok_or_else(|| CliError::Config("the bike-share preset needs a [bikeshare] path".into()))?;
    let mut seeds = SeedLog::default();
    let full = load_bikeshare(&BikeShareConfig {
        path: section.path.clone(),
        subsample: None,
        seed: 0,
    })
    .context(|| format!("loading {}", section.path.display()))?;
    let m = section.subsample.or((!cfg.full).then_some(DEFAULT_SUBSAMPLE));
    let data = match m {
        Some(m) if m < full.n_rows() => {
            subsample(&full, m, seeds.derive(cfg.seed, 0, "bikeshare/subsample")).context(|| "subsampling".into())?
        }
        _ => full.clone(),
    };
    let comparison = rank_comparison(
        &data,
        &cfg.forest,
        cfg.perm_reps(),
        cfg.perm_reps(),
        seeds.derive(cfg.seed, 0, "bikeshare/ranks"),
    )
    .context(|| "rank comparison".into())?;
    Ok(Fig7Result {
        source_rows: full.n_rows(),
        data,
        comparison,
        seeds,
    })
}

pub fn write(res: &Fig7Result, bundle: &mut Bundle) -> Result<(), CliError> {
    res.seeds.record(bundle);
    bundle.note("source_rows", res.source_rows.to_string());
    bundle.note("rows_used", res.data.n_rows().to_string());
    bundle.note("features_used", res.data.n_features().to_string());
    bundle.write_csv("ranks.csv", "aggregate", |b| res.comparison.write_csv(b))?;
    let c = &res.comparison;
    let series = [
        RankSeries {
            label: "OOB".into(),
            marker: 'o',
            names: c.names.clone(),
            mean_rank: c.oob_rank.iter().map(|&r| r as f64).collect(),
        },
        RankSeries {
            label: "permute and relearn".into(),
            marker: 'r',
            names: c.names.clone(),
            mean_rank: c.relearn_rank.iter().map(|&r| r as f64).collect(),
        },
    ];
    let svg = render_rank_scatter(&series, &Style::titled("bike share: importance rank"))?;
    bundle.write("ranks.svg", "figure", svg.as_bytes())?;
    Ok(())
}
