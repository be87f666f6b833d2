//! Data containers and the column constructions shared by every diagnostic.
//!
//! Features are stored column-major so that permuting, fixing or replacing a
//! single column touches one contiguous vector. All operations return fresh
//! values; nothing mutates a dataset in place.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Column name used for the response in dataset CSV files.
pub const RESPONSE_COLUMN: &str = "response";

/// Dense real feature matrix, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl Features {
    /// Builds a matrix from columns; every column must have the same length
    /// and contain only finite values.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        let n_rows = columns[0].len();
        if n_rows == 0 {
            return Err(Error::InvalidDataset("no rows".into()));
        }
        for (j, c) in columns.iter().enumerate() {
            if c.len() != n_rows {
                return Err(Error::LengthMismatch {
                    expected: n_rows,
                    actual: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature column {j}")));
            }
        }
        Ok(Self { n_rows, columns })
    }

    /// Builds a matrix from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map(Vec::len).unwrap_or(0);
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for r in rows {
            if r.len() != p {
                return Err(Error::LengthMismatch {
                    expected: p,
                    actual: r.len(),
                });
            }
            for (c, &v) in columns.iter_mut().zip(r) {
                c.push(v);
            }
        }
        Self::from_columns(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    /// Copies row `i` into `buf` (resized to the column count).
    pub fn row_into(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.columns.iter().map(|c| c[i]));
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    fn check_col(&self, j: usize) -> Result<()> {
        if j >= self.n_cols() {
            return Err(Error::FeatureOutOfRange {
                index: j,
                width: self.n_cols(),
            });
        }
        Ok(())
    }

    /// Returns a copy whose column `j` is reordered by `perm` (gather:
    /// `out[i] = col[perm[i]]`).
    pub fn permute_column(&self, j: usize, perm: &Permutation) -> Result<Self> {
        self.check_col(j)?;
        if perm.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                expected: self.n_rows,
                actual: perm.len(),
            });
        }
        let mut out = self.clone();
        out.columns[j] = perm.apply(&self.columns[j]);
        Ok(out)
    }

    /// Returns a copy whose column `j` is the constant `x`.
    pub fn set_column(&self, j: usize, x: f64) -> Result<Self> {
        self.check_col(j)?;
        if !x.is_finite() {
            return Err(Error::NonFinite("set_column value".into()));
        }
        let mut out = self.clone();
        out.columns[j].iter_mut().for_each(|v| *v = x);
        Ok(out)
    }

    /// Returns a copy whose column `j` is `values`.
    pub fn replace_column(&self, j: usize, values: &[f64]) -> Result<Self> {
        self.check_col(j)?;
        if values.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                expected: self.n_rows,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("replacement column".into()));
        }
        let mut out = self.clone();
        out.columns[j] = values.to_vec();
        Ok(out)
    }

    /// Returns a copy without column `j`.
    pub fn drop_column(&self, j: usize) -> Result<Self> {
        self.check_col(j)?;
        if self.n_cols() == 1 {
            return Err(Error::InvalidParameter(
                "cannot drop the only feature".into(),
            ));
        }
        let mut columns = self.columns.clone();
        columns.remove(j);
        Ok(Self {
            n_rows: self.n_rows,
            columns,
        })
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_rows) {
            return Err(Error::RowOutOfRange {
                index: bad,
                rows: self.n_rows,
            });
        }
        let columns = self
            .columns
            .iter()
            .map(|c| idx.iter().map(|&i| c[i]).collect())
            .collect();
        Self::from_columns(columns)
    }
}

/// Feature matrix, response and feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Features,
    response: Vec<f64>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Features, response: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if response.len() != features.n_rows() {
            return Err(Error::LengthMismatch {
                expected: features.n_rows(),
                actual: response.len(),
            });
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        if names.len() != features.n_cols() {
            return Err(Error::InvalidDataset(format!(
                "{} names for {} features",
                names.len(),
                features.n_cols()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate feature name {n:?}")));
            }
            if n == RESPONSE_COLUMN {
                return Err(Error::InvalidDataset(format!(
                    "feature name {RESPONSE_COLUMN:?} is reserved"
                )));
            }
        }
        Ok(Self {
            features,
            response,
            names,
        })
    }

    /// Names features `x1..xp`.
    pub fn with_default_names(features: Features, response: Vec<f64>) -> Result<Self> {
        let names = default_names(features.n_cols());
        Self::new(features, response, names)
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    fn with_features(&self, features: Features) -> Self {
        Self {
            features,
            response: self.response.clone(),
            names: self.names.clone(),
        }
    }

    pub fn permute_column(&self, j: usize, perm: &Permutation) -> Result<Self> {
        Ok(self.with_features(self.features.permute_column(j, perm)?))
    }

    pub fn set_column(&self, j: usize, x: f64) -> Result<Self> {
        Ok(self.with_features(self.features.set_column(j, x)?))
    }

    pub fn replace_column(&self, j: usize, values: &[f64]) -> Result<Self> {
        Ok(self.with_features(self.features.replace_column(j, values)?))
    }

    /// Drops feature `j` together with its name.
    pub fn drop_column(&self, j: usize) -> Result<Self> {
        let features = self.features.drop_column(j)?;
        let mut names = self.names.clone();
        names.remove(j);
        Ok(Self {
            features,
            response: self.response.clone(),
            names,
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(idx)?;
        let response = idx.iter().map(|&i| self.response[i]).collect();
        Ok(Self {
            features,
            response,
            names: self.names.clone(),
        })
    }

    /// Writes the dataset as CSV: feature names then `response` in the header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(RESPONSE_COLUMN);
        wr.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            rec.clear();
            rec.extend(self.features.columns.iter().map(|c| c[i].to_string()));
            rec.push(self.response[i].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.last().map(String::as_str) != Some(RESPONSE_COLUMN) {
            return Err(Error::SchemaMismatch(vec![RESPONSE_COLUMN.to_string()]));
        }
        let p = header.len() - 1;
        let mut columns = vec![Vec::new(); p];
        let mut response = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            for (k, cell) in rec.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumeric {
                    line: line + 2,
                    column: header[k].clone(),
                    value: cell.to_string(),
                })?;
                if k < p {
                    columns[k].push(v);
                } else {
                    response.push(v);
                }
            }
        }
        let names = header[..p].to_vec();
        Self::new(Features::from_columns(columns)?, response, names)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// A bijection on `0..n`, applied as a gather.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &k in &order {
            if k >= n || seen[k] {
                return Err(Error::NotABijection(n));
            }
            seen[k] = true;
        }
        Ok(Self { order })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    /// Uniformly random permutation (Fisher-Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&k| values[k]).collect()
    }
}

/// Per-row squared-error losses and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector {
    pub per_row: Vec<f64>,
    pub total: f64,
}

pub fn squared_loss(y: &[f64], yhat: &[f64]) -> Result<LossVector> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: yhat.len(),
        });
    }
    let per_row: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).collect();
    if per_row.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss".into()));
    }
    let total = per_row.iter().sum();
    Ok(LossVector { per_row, total })
}

/// Sum of squared errors without materialising the per-row vector.
pub(crate) fn sse(y: &[f64], yhat: &[f64]) -> f64 {
    y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Ranks scores from least (rank 1) to greatest (rank p). Ties go to the
/// lower feature index first.
pub fn rank_scores(scores: &[f64]) -> Result<Vec<usize>> {
    if let Some(j) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score for feature {j}")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; scores.len()];
    for (r, &j) in idx.iter().enumerate() {
        ranks[j] = r + 1;
    }
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Dataset {
        let f = Features::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        Dataset::with_default_names(f, vec![0.5, 1.5]).unwrap()
    }

    #[test]
    fn permute_identity_is_noop() {
        let d = small();
        let out = d.permute_column(0, &Permutation::identity(2)).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn permute_three_rows() {
        let f = Features::from_columns(vec![vec![0.1, 0.5, 0.9]]).unwrap();
        let perm = Permutation::new(vec![2, 0, 1]).unwrap();
        let out = f.permute_column(0, &perm).unwrap();
        assert_eq!(out.column(0), &[0.9, 0.1, 0.5]);
    }

    #[test]
    fn permutation_rejects_non_bijection() {
        assert!(matches!(
            Permutation::new(vec![0, 0, 1]),
            Err(Error::NotABijection(3))
        ));
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn permute_errors() {
        let d = small();
        assert!(matches!(
            d.permute_column(2, &Permutation::identity(2)),
            Err(Error::FeatureOutOfRange { .. })
        ));
        assert!(matches!(
            d.permute_column(0, &Permutation::identity(3)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn set_column_cases() {
        let d = small();
        let out = d.set_column(0, 0.0).unwrap();
        assert_eq!(out.features().column(0), &[0.0, 0.0]);
        assert_eq!(out.features().column(1), &[2.0, 4.0]);
        let again = out.set_column(0, 0.0).unwrap();
        assert_eq!(again, out);
        assert!(d.set_column(0, f64::NAN).is_err());
        assert!(d.set_column(5, 1.0).is_err());
    }

    #[test]
    fn replace_column_cases() {
        let d = small();
        let orig = d.features().column(1).to_vec();
        assert_eq!(d.replace_column(1, &orig).unwrap(), d);
        assert_eq!(
            d.replace_column(0, &[0.5, 0.5]).unwrap(),
            d.set_column(0, 0.5).unwrap()
        );
        let changed = d.replace_column(1, &[9.0, 8.0]).unwrap();
        assert_eq!(changed.replace_column(1, &orig).unwrap(), d);
        assert!(d.replace_column(0, &[1.0]).is_err());
        assert!(d.replace_column(0, &[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn squared_loss_cases() {
        let l = squared_loss(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l.per_row, vec![1.0, 4.0]);
        assert_eq!(l.total, 5.0);
        assert_eq!(squared_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().total, 0.0);
        assert!(squared_loss(&[1.0], &[1.0, 2.0]).is_err());
        // residual scaling by 3 multiplies the total by 9
        let s = squared_loss(&[3.0, 6.0], &[0.0, 0.0]).unwrap();
        assert!((s.total - 45.0).abs() < 1e-12);
    }

    #[test]
    fn rank_cases() {
        assert_eq!(rank_scores(&[0.2, 0.9, 0.5]).unwrap(), vec![1, 3, 2]);
        assert_eq!(rank_scores(&[1.0; 4]).unwrap(), vec![1, 2, 3, 4]);
        assert!(rank_scores(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn dataset_invariants() {
        let f = Features::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(Dataset::new(f.clone(), vec![1.0], vec!["a".into(), "a".into()]).is_err());
        assert!(Dataset::new(f.clone(), vec![1.0, 2.0], default_names(2)).is_err());
        assert!(Dataset::new(f.clone(), vec![1.0], default_names(1)).is_err());
        assert!(Features::from_columns(vec![vec![f64::NAN]]).is_err());
        assert!(Features::from_columns(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..20).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 1e5 - 7.0).collect();
        let d = Dataset::with_default_names(Features::from_columns(cols).unwrap(), y).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,x3,response\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    proptest! {
        #[test]
        fn permute_preserves_multiset(vals in proptest::collection::vec(-1e3f64..1e3, 1..40), seed in any::<u64>()) {
            let n = vals.len();
            let other: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let f = Features::from_columns(vec![vals.clone(), other.clone()]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let perm = Permutation::random(n, &mut rng);
            let out = f.permute_column(0, &perm).unwrap();
            let mut a = vals.clone();
            let mut b = out.column(0).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            prop_assert_eq!(out.column(1), other.as_slice());
        }

        #[test]
        fn ranks_are_a_permutation(scores in proptest::collection::vec(-1e6f64..1e6, 1..30)) {
            let mut r = rank_scores(&scores).unwrap();
            r.sort_unstable();
            prop_assert_eq!(r, (1..=scores.len()).collect::<Vec<_>>());
        }

        #[test]
        fn ranks_reverse_under_negation(scores in proptest::collection::hash_set(-100000i64..100000, 1..30)) {
            let s: Vec<f64> = scores.into_iter().map(|v| v as f64).collect();
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let p = s.len();
            let r = rank_scores(&s).unwrap();
            let rn = rank_scores(&neg).unwrap();
            for j in 0..p {
                prop_assert_eq!(r[j] + rn[j], p + 1);
            }
        }

        #[test]
        fn ranks_invariant_to_monotone_transform(scores in proptest::collection::vec(-5f64..5.0, 1..30)) {
            let t: Vec<f64> = scores.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(rank_scores(&scores).unwrap(), rank_scores(&t).unwrap());
        }

        #[test]
        fn loss_invariant_to_row_order(y in proptest::collection::vec(-10f64..10.0, 2..30), seed in any::<u64>()) {
            let yhat: Vec<f64> = y.iter().map(|v| v * 0.5 + 1.0).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let perm = Permutation::random(y.len(), &mut rng);
            let a = squared_loss(&y, &yhat).unwrap();
            let b = squared_loss(&perm.apply(&y), &perm.apply(&yhat)).unwrap();
            prop_assert!((a.total - b.total).abs() <= 1e-9 * y.len() as f64);
            let sum: f64 = a.per_row.iter().sum();
            prop_assert!((a.total - sum).abs() <= 1e-9 * y.len() as f64);
        }
    }
}
