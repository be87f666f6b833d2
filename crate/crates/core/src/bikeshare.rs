//! Loader for the UCI hourly bike-sharing file and the out-of-bag versus
//! permute-and-relearn rank comparison run on it.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Features};
use crate::error::{Error, Result};
use crate::importance::{oob_report, permute_relearn_any_width};
use crate::learners::{fit_forest, ForestConfig, ForestLearner};
use crate::rng::SeededStream;

/// Predictor columns, in the order they appear in the hourly file.
pub const PREDICTORS: [&str; 12] = [
    "season",
    "yr",
    "mnth",
    "hr",
    "holiday",
    "weekday",
    "workingday",
    "weathersit",
    "temp",
    "atemp",
    "hum",
    "windspeed",
];
pub const COUNT_COLUMN: &str = "cnt";
/// Columns present in the file but never used as predictors.
pub const EXCLUDED: [&str; 4] = ["instant", "dteday", "casual", "registered"];
pub const DEFAULT_SUBSAMPLE: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BikeShareConfig {
    pub path: PathBuf,
    pub subsample: Option<usize>,
    pub seed: u64,
}

/// Reads the file at `cfg.path`, optionally keeping a seeded subset of rows
/// in their original order.
pub fn load_bikeshare(cfg: &BikeShareConfig) -> Result<Dataset> {
    let file = std::fs::File::open(&cfg.path).map_err(|source| Error::Io {
        path: cfg.path.clone(),
        source,
    })?;
    let d = read_bikeshare(file)?;
    match cfg.subsample {
        None => Ok(d),
        Some(m) => subsample(&d, m, SeededStream::from_seed(cfg.seed)),
    }
}

/// Parses hourly-schema CSV. Response is `ln(cnt)`.
pub fn read_bikeshare<R: Read>(r: R) -> Result<Dataset> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rd.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let missing: Vec<String> = PREDICTORS
        .iter()
        .chain([&COUNT_COLUMN])
        .filter(|c| find(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::SchemaMismatch(missing));
    }
    let pred_idx: Vec<usize> = PREDICTORS.iter().map(|c| find(c).unwrap()).collect();
    let cnt_idx = find(COUNT_COLUMN).unwrap();
    let mut columns = vec![Vec::new(); PREDICTORS.len()];
    let mut response = Vec::new();
    let mut bad_counts = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        // header is line 1
        let line = k + 2;
        let cell = |idx: usize| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    line,
                    column: header[idx].to_string(),
                    value: raw.to_string(),
                })
        };
        for (col, &idx) in columns.iter_mut().zip(&pred_idx) {
            col.push(cell(idx)?);
        }
        let cnt = cell(cnt_idx)?;
        if cnt < 1.0 {
            bad_counts.push(line);
        }
        response.push(cnt.max(1.0).ln());
    }
    if !bad_counts.is_empty() {
        return Err(Error::NonPositiveCount(bad_counts));
    }
    if response.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    let names = PREDICTORS.iter().map(|s| s.to_string()).collect();
    Dataset::new(Features::from_columns(columns)?, response, names)
}

/// `m` distinct rows chosen with `stream`, kept in file order.
pub fn subsample(d: &Dataset, m: usize, stream: SeededStream) -> Result<Dataset> {
    if m == 0 || m > d.n_rows() {
        return Err(Error::InvalidParameter(format!(
            "subsample {m} must lie in 1..={}",
            d.n_rows()
        )));
    }
    let mut rng = stream.rng();
    let mut idx = rand::seq::index::sample(&mut rng, d.n_rows(), m).into_vec();
    idx.sort_unstable();
    d.select_rows(&idx)
}

/// Paired OOB and permute-and-relearn ranks per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    pub names: Vec<String>,
    pub oob_rank: Vec<usize>,
    pub relearn_rank: Vec<usize>,
    pub oob_scores: Vec<f64>,
    pub relearn_scores: Vec<f64>,
}

/// Fits a forest on `d`, then ranks features by out-of-bag importance and
/// by permute-and-relearn importance with `relearn_reps` refits each.
pub fn rank_comparison(
    d: &Dataset,
    forest: &ForestConfig,
    oob_reps: usize,
    relearn_reps: usize,
    stream: SeededStream,
) -> Result<RankComparison> {
    let cfg = ForestConfig {
        seed: stream.child("forest", 0).seed,
        ..forest.clone()
    };
    let model = fit_forest(d, &cfg)?;
    let oob = oob_report(&model, d, oob_reps, stream.child("oob", 0))?;
    let relearn = permute_relearn_any_width(&ForestLearner(forest.clone()), d, relearn_reps, stream.child("relearn", 0))?;
    Ok(RankComparison {
        names: d.names().to_vec(),
        oob_rank: oob.ranks(),
        relearn_rank: relearn.ranks(),
        oob_scores: oob.scores,
        relearn_scores: relearn.scores,
    })
}

impl RankComparison {
    pub fn rank_of(&self, name: &str) -> Option<(usize, usize)> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((self.oob_rank[j], self.relearn_rank[j]))
    }

    /// CSV with columns `feature, oob_rank, relearn_rank`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["feature", "oob_rank", "relearn_rank"])?;
        for ((n, a), b) in self.names.iter().zip(&self.oob_rank).zip(&self.relearn_rank) {
            wr.write_record([n.clone(), a.to_string(), b.to_string()])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::GeneratorConfig;

    const FIXTURE: &str = "\
instant,dteday,season,yr,mnth,hr,holiday,weekday,workingday,weathersit,temp,atemp,hum,windspeed,casual,registered,cnt
1,2011-01-01,1,0,1,0,0,6,0,1,0.24,0.2879,0.81,0,3,13,16
2,2011-01-01,1,0,1,1,0,6,0,1,0.22,0.2727,0.8,0,8,32,40
3,2011-01-01,1,0,1,2,0,6,0,1,0.22,0.2727,0.8,0,5,27,32
";

    #[test]
    fn fixture_loads_with_log_counts() {
        let d = read_bikeshare(FIXTURE.as_bytes()).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.n_features(), 12);
        assert_eq!(d.response(), &[16f64.ln(), 40f64.ln(), 32f64.ln()]);
        assert_eq!(d.features().column(3), &[0.0, 1.0, 2.0]);
        assert!(!d.names().iter().any(|n| EXCLUDED.contains(&n.as_str())));
    }

    #[test]
    fn loading_is_idempotent() {
        let a = read_bikeshare(FIXTURE.as_bytes()).unwrap();
        let b = read_bikeshare(FIXTURE.as_bytes()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_columns_are_named() {
        let text = FIXTURE.replace("temp,atemp", "tmp,atemp");
        match read_bikeshare(text.as_bytes()) {
            Err(Error::SchemaMismatch(cols)) => assert_eq!(cols, vec!["temp".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_is_located() {
        let text = FIXTURE.replace(",0.22,0.2727,0.8,0,8,", ",warm,0.2727,0.8,0,8,");
        match read_bikeshare(text.as_bytes()) {
            Err(Error::NonNumeric { line, column, value }) => {
                assert_eq!((line, column.as_str(), value.as_str()), (3, "temp", "warm"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_counts_are_listed() {
        let text = FIXTURE.replace(",3,13,16", ",0,0,0").replace(",5,27,32", ",0,0,0");
        match read_bikeshare(text.as_bytes()) {
            Err(Error::NonPositiveCount(lines)) => assert_eq!(lines, vec![2, 4]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let cfg = BikeShareConfig {
            path: "/nonexistent/hour.csv".into(),
            subsample: None,
            seed: 0,
        };
        assert!(matches!(load_bikeshare(&cfg), Err(Error::Io { .. })));
    }

    #[test]
    fn subsample_is_seeded_and_ordered() {
        let d = GeneratorConfig::benchmark(50, 0.0, 1).generate().unwrap();
        let a = subsample(&d, 10, SeededStream::from_seed(3)).unwrap();
        let b = subsample(&d, 10, SeededStream::from_seed(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_rows(), 10);
        assert!(subsample(&d, 51, SeededStream::from_seed(3)).is_err());
    }

    #[test]
    fn single_feature_ranks_are_one() {
        let full = GeneratorConfig::benchmark(60, 0.0, 2).generate().unwrap();
        let x = Features::from_columns(vec![full.features().column(9).to_vec()]).unwrap();
        let d = Dataset::with_default_names(x, full.response().to_vec()).unwrap();
        let cfg = ForestConfig {
            n_trees: 20,
            ..ForestConfig::default()
        };
        let rc = rank_comparison(&d, &cfg, 1, 1, SeededStream::from_seed(4)).unwrap();
        assert_eq!(rc.oob_rank, vec![1]);
        assert_eq!(rc.relearn_rank, vec![1]);
        let mut buf = Vec::new();
        rc.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "feature,oob_rank,relearn_rank\nx1,1,1\n");
    }
}
