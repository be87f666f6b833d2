//! Bagged regression forest with out-of-bag bookkeeping.
//!
//! Each tree is grown on a bootstrap sample by recursive binary splitting.
//! At every node `mtry` features are drawn without replacement and the split
//! maximising the reduction in squared error is taken, with thresholds at
//! midpoints between adjacent distinct values. A node becomes a leaf when it
//! holds fewer than `2 * min_leaf` samples, when its responses are constant,
//! or when no split leaves `min_leaf` samples on both sides.
//!
//! Leaves remember which training rows reached them, so a tree prediction is
//! the weighted average `sum_i w_i y_i` over its leaf co-members, with
//! weights given by bootstrap multiplicity.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_width, Predictor};
use crate::dataset::{Dataset, Features};
use crate::error::{Error, Result};
use crate::rng::SeededStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per node; `None` means `max(1, p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    /// Draw `N` rows with replacement per tree; otherwise every row is used
    /// once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf: 5,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1)).clamp(1, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Distinct training rows in this leaf, ascending.
        rows: Vec<u32>,
        value: f64,
    },
}

/// One regression tree stored as a flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_index(&self, x: &Features, i: usize) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if x.get(i, *feature) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { .. } => return k,
            }
        }
    }

    fn leaf_index_row(&self, row: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if row[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { .. } => return k,
            }
        }
    }

    fn leaf_value(&self, k: usize) -> f64 {
        match &self.nodes[k] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Prediction for row `i` of `x`.
    pub fn predict_at(&self, x: &Features, i: usize) -> f64 {
        self.leaf_value(self.leaf_index(x, i))
    }

    pub fn predict(&self, x: &Features) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict_at(x, i)).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.leaf_value(self.leaf_index_row(row))
    }

    /// Training rows sharing the leaf reached by `row`.
    pub fn leaf_rows(&self, row: &[f64]) -> &[u32] {
        match &self.nodes[self.leaf_index_row(row)] {
            Node::Leaf { rows, .. } => rows,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Every `(feature, threshold)` split in the tree.
    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// `inbag[t][i]`: how many times training row `i` was drawn for tree `t`.
    pub inbag: Vec<Vec<u32>>,
    /// Configuration with `mtry` resolved.
    pub config: ForestConfig,
    pub n_features: usize,
    pub n_train: usize,
}

struct Grower<'a> {
    x: &'a Features,
    y: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    // scratch
    pairs: Vec<(f64, f64)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<'a> Grower<'a> {
    fn grow<R: Rng>(&mut self, samples: &mut [u32], rng: &mut R) {
        // (node slot, sample range) work stack
        self.nodes.push(placeholder());
        let mut stack = vec![(0usize, 0usize, samples.len())];
        while let Some((slot, lo, hi)) = stack.pop() {
            let node_samples = &mut samples[lo..hi];
            match self.best_split(node_samples, rng) {
                None => self.nodes[slot] = self.make_leaf(node_samples),
                Some(best) => {
                    let mid = partition(node_samples, |&s| {
                        self.x.get(s as usize, best.feature) <= best.threshold
                    });
                    let left = self.nodes.len();
                    self.nodes.push(placeholder());
                    self.nodes.push(placeholder());
                    self.nodes[slot] = Node::Split {
                        feature: best.feature,
                        threshold: best.threshold,
                        left: left as u32,
                        right: (left + 1) as u32,
                    };
                    stack.push((left + 1, lo + mid, hi));
                    stack.push((left, lo, lo + mid));
                }
            }
        }
    }

    fn make_leaf(&self, samples: &[u32]) -> Node {
        let value = samples.iter().map(|&s| self.y[s as usize]).sum::<f64>() / samples.len() as f64;
        let mut rows = samples.to_vec();
        rows.sort_unstable();
        rows.dedup();
        Node::Leaf { rows, value }
    }

    fn best_split<R: Rng>(&mut self, samples: &[u32], rng: &mut R) -> Option<BestSplit> {
        let m = samples.len();
        if m < 2 * self.min_leaf || m < 2 {
            return None;
        }
        let first = self.y[samples[0] as usize];
        if samples.iter().all(|&s| self.y[s as usize] == first) {
            return None;
        }
        let p = self.x.n_cols();
        let mut feats: Vec<usize> = sample_indices(rng, p, self.mtry).into_vec();
        feats.sort_unstable();
        let total: f64 = samples.iter().map(|&s| self.y[s as usize]).sum();
        let mut best: Option<BestSplit> = None;
        for &f in &feats {
            let col = self.x.column(f);
            self.pairs.clear();
            self.pairs
                .extend(samples.iter().map(|&s| (col[s as usize], self.y[s as usize])));
            self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for k in 1..m {
                left_sum += self.pairs[k - 1].1;
                if k < self.min_leaf || m - k < self.min_leaf {
                    continue;
                }
                let (a, b) = (self.pairs[k - 1].0, self.pairs[k].0);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                // maximising this is equivalent to minimising the child SSE
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (m - k) as f64;
                if best.as_ref().is_none_or(|bs| score > bs.score) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: midpoint(a, b),
                        score,
                    });
                }
            }
        }
        // A split must strictly improve on the parent.
        let parent = total * total / m as f64;
        best.filter(|b| b.score > parent * (1.0 + 1e-12))
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    // the threshold must separate a (left, <=) from b (right)
    if t >= b {
        a
    } else {
        t
    }
}

fn placeholder() -> Node {
    Node::Leaf {
        rows: Vec::new(),
        value: 0.0,
    }
}

/// Moves elements satisfying `pred` to the front; returns their count.
fn partition<F: Fn(&u32) -> bool>(v: &mut [u32], pred: F) -> usize {
    let mut k = 0;
    for i in 0..v.len() {
        if pred(&v[i]) {
            v.swap(i, k);
            k += 1;
        }
    }
    k
}

fn grow_tree(d: &Dataset, cfg: &ForestConfig, mtry: usize, stream: SeededStream) -> (Tree, Vec<u32>) {
    let n = d.n_rows();
    let mut rng = stream.rng();
    let mut inbag = vec![0u32; n];
    let mut samples: Vec<u32> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n) as u32).collect()
    } else {
        (0..n as u32).collect()
    };
    for &s in &samples {
        inbag[s as usize] += 1;
    }
    let mut g = Grower {
        x: d.features(),
        y: d.response(),
        mtry,
        min_leaf: cfg.min_leaf,
        nodes: Vec::new(),
        pairs: Vec::with_capacity(n),
    };
    g.grow(&mut samples, &mut rng);
    (Tree { nodes: g.nodes }, inbag)
}

pub fn fit_forest(d: &Dataset, cfg: &ForestConfig) -> Result<ForestModel> {
    let n = d.n_rows();
    if cfg.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    if cfg.min_leaf == 0 {
        return Err(Error::InvalidParameter("min_leaf must be >= 1".into()));
    }
    if n < 2 || n < cfg.min_leaf {
        return Err(Error::InvalidDataset(format!(
            "{n} rows too few for min_leaf = {}",
            cfg.min_leaf
        )));
    }
    let p = d.n_features();
    let mtry = cfg.resolved_mtry(p);
    let root = SeededStream::from_seed(cfg.seed);
    let built: Vec<(Tree, Vec<u32>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(d, cfg, mtry, root.child("tree", t as u64)))
        .collect();
    let (trees, inbag) = built.into_iter().unzip();
    Ok(ForestModel {
        trees,
        inbag,
        config: ForestConfig {
            mtry: Some(mtry),
            ..cfg.clone()
        },
        n_features: p,
        n_train: n,
    })
}

/// Out-of-bag predictions: row `i` averages only the trees that never drew
/// it. `prediction[i]` is `None` when no such tree exists.
#[derive(Debug, Clone, PartialEq)]
pub struct OobPredictions {
    pub prediction: Vec<Option<f64>>,
    pub trees: Vec<Vec<u32>>,
}

impl ForestModel {
    /// Trees for which row `i` is out of bag.
    pub fn oob_trees(&self, i: usize) -> Vec<u32> {
        (0..self.trees.len() as u32)
            .filter(|&t| self.inbag[t as usize][i] == 0)
            .collect()
    }

    /// Rows out of bag for tree `t`.
    pub fn oob_rows(&self, t: usize) -> Vec<usize> {
        self.inbag[t]
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (m == 0).then_some(i))
            .collect()
    }

    pub fn oob_predictions(&self, d: &Dataset) -> Result<OobPredictions> {
        if d.n_rows() != self.n_train {
            return Err(Error::LengthMismatch {
                expected: self.n_train,
                actual: d.n_rows(),
            });
        }
        check_width(self.n_features, d.features())?;
        let x = d.features();
        let mut prediction = Vec::with_capacity(self.n_train);
        let mut trees = Vec::with_capacity(self.n_train);
        for i in 0..self.n_train {
            let ts = self.oob_trees(i);
            let pred = (!ts.is_empty()).then(|| {
                ts.iter()
                    .map(|&t| self.trees[t as usize].predict_at(x, i))
                    .sum::<f64>()
                    / ts.len() as f64
            });
            prediction.push(pred);
            trees.push(ts);
        }
        Ok(OobPredictions { prediction, trees })
    }

    /// For each tree, the training rows sharing `x`'s leaf.
    pub fn leaf_comembers(&self, x: &[f64]) -> Result<Vec<Vec<u32>>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query point".into()));
        }
        Ok(self.trees.iter().map(|t| t.leaf_rows(x).to_vec()).collect())
    }
}

impl Predictor for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &Features) -> Result<Vec<f64>> {
        check_width(self.n_features, x)?;
        let mut out = vec![0.0; x.n_rows()];
        for t in &self.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += t.predict_at(x, i);
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        Ok(out)
    }
}
