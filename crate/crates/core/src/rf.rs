//! Random forest of Gini decision trees with plurality voting and
//! mean-decrease-impurity feature importance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AbsenteeismClass;
use crate::numerics::{argmax, Matrix, RngStream, Scalar};
use crate::preprocess::{EncodedMatrix, FeatureSchema};

/// Smallest impurity decrease accepted as a split.
pub const MIN_DECREASE: f64 = 1e-12;

/// `1 − Σ (nᵢ/n)²`.
pub fn gini(counts: &[usize]) -> Result<f64> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyInput("no rows".into()));
    }
    let n = n as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

/// `Σ cᵢ² / n`; impurity of the node is `1 − this / n`.
fn sq_over_n(counts: &[usize], n: usize) -> f64 {
    counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate<T> {
    pub feature: usize,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: T,
    /// `gini(parent) − (n_l/n) gini(left) − (n_r/n) gini(right)`.
    pub decrease: f64,
}

/// Decrease for a parent split into the given child counts.
pub fn split_decrease(left: &[usize], right: &[usize]) -> f64 {
    let nl: usize = left.iter().sum();
    let nr: usize = right.iter().sum();
    let n = nl + nr;
    let parent: Vec<usize> = left.iter().zip(right).map(|(a, b)| a + b).collect();
    // n·gini(parent) − n_l·gini(left) − n_r·gini(right), divided by n.
    (sq_over_n(left, nl) + sq_over_n(right, nr) - sq_over_n(&parent, n)) / n as f64
}

fn midpoint<T: Scalar>(lo: T, hi: T) -> T {
    let mid = (lo + hi) / T::of(2.0);
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Best Gini split of `rows` over `features`, scanning midpoints between
/// consecutive distinct values. Ties go to the lower feature index, then the
/// lower threshold. `None` when nothing decreases impurity.
pub fn best_split<T: Scalar>(
    x: &Matrix<T>,
    labels: &[usize],
    n_classes: usize,
    rows: &[usize],
    features: &[usize],
) -> Option<SplitCandidate<T>> {
    let mut feats = features.to_vec();
    feats.sort_unstable();
    let mut best: Option<SplitCandidate<T>> = None;
    for &f in &feats {
        if let Some(c) = best_split_on(x, labels, n_classes, rows, f) {
            if best.as_ref().is_none_or(|b| c.decrease > b.decrease) {
                best = Some(c);
            }
        }
    }
    best
}

fn best_split_on<T: Scalar>(x: &Matrix<T>, labels: &[usize], n_classes: usize, rows: &[usize], f: usize) -> Option<SplitCandidate<T>> {
    if rows.len() < 2 {
        return None;
    }
    let mut order: Vec<(T, usize)> = rows.iter().map(|&r| (x.get(r, f), labels[r])).collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
    let n = order.len();
    let mut total = vec![0usize; n_classes];
    for &(_, l) in &order {
        total[l] += 1;
    }
    let parent_term = sq_over_n(&total, n);
    let mut left = vec![0usize; n_classes];
    let mut right = total;
    // Running Σc² for both sides keeps the scan O(n).
    let mut left_sq = 0.0f64;
    let mut right_sq: f64 = right.iter().map(|&c| (c * c) as f64).sum();
    let mut best: Option<SplitCandidate<T>> = None;
    for i in 0..n - 1 {
        let l = order[i].1;
        left_sq += (2 * left[l] + 1) as f64;
        left[l] += 1;
        right_sq -= (2 * right[l] - 1) as f64;
        right[l] -= 1;
        if order[i].0 == order[i + 1].0 {
            continue;
        }
        let nl = i + 1;
        let nr = n - nl;
        let decrease = (left_sq / nl as f64 + right_sq / nr as f64 - parent_term) / n as f64;
        if decrease > MIN_DECREASE && best.as_ref().is_none_or(|b| decrease > b.decrease) {
            best = Some(SplitCandidate {
                feature: f,
                threshold: midpoint(order[i].0, order[i + 1].0),
                decrease,
            });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        /// Rows (with bootstrap multiplicity) reaching this node.
        n_rows: usize,
        decrease: f64,
    },
    Leaf {
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    /// Root at index 0.
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn leaf_counts(&self, x: &[T]) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the reached leaf, ties toward the lower index.
    pub fn predict_index(&self, x: &[T]) -> usize {
        argmax(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    fn validate(&self, n_features: usize, n_classes: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidParameter("empty tree".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if *feature >= n_features || !threshold.is_finite() || *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(Error::InvalidParameter(format!("malformed split node {i}")));
                    }
                }
                Node::Leaf { counts } => {
                    if counts.len() != n_classes || counts.iter().all(|&c| c == 0) {
                        return Err(Error::InvalidParameter(format!("malformed leaf {i}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Grows one tree to purity (or fewer than `min_split` rows). Each node
/// samples `max_features` candidates; when none of them splits, the
/// remaining features are tried in random order.
pub fn grow_tree<T: Scalar>(
    x: &Matrix<T>,
    labels: &[usize],
    n_classes: usize,
    rows: Vec<usize>,
    max_features: usize,
    min_split: usize,
    rng: &mut RngStream,
) -> DecisionTree<T> {
    let d = x.cols();
    let mut nodes: Vec<Node<T>> = Vec::new();
    nodes.push(Node::Leaf { counts: vec![] });
    let mut stack = vec![(0usize, rows)];
    while let Some((slot, rows)) = stack.pop() {
        let mut counts = vec![0usize; n_classes];
        for &r in &rows {
            counts[labels[r]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || rows.len() < min_split.max(2) {
            None
        } else {
            let mut feats: Vec<usize> = (0..d).collect();
            rng.shuffle(&mut feats);
            let k = max_features.clamp(1, d.max(1));
            best_split(x, labels, n_classes, &rows, &feats[..k]).or_else(|| {
                feats[k..]
                    .iter()
                    .find_map(|&f| best_split(x, labels, n_classes, &rows, &[f]))
            })
        };
        match split {
            None => nodes[slot] = Node::Leaf { counts },
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, s.feature) <= s.threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { counts: vec![] });
                let right = nodes.len();
                nodes.push(Node::Leaf { counts: vec![] });
                nodes[slot] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                    n_rows: rows.len(),
                    decrease: s.decrease,
                };
                stack.push((right, r));
                stack.push((left, l));
            }
        }
    }
    DecisionTree { nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per node; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_features: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<T> {
    pub trees: Vec<DecisionTree<T>>,
    /// Seed of each tree's bootstrap draw and feature sampling.
    pub tree_seeds: Vec<u64>,
    pub max_features: usize,
    pub n_features: usize,
    pub n_train_rows: usize,
    pub bootstrap: bool,
}

fn bootstrap_rows(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = RngStream::derive(seed, 0xB007);
    (0..n).map(|_| rng.next_below(n)).collect()
}

impl<T: Scalar> ForestModel<T> {
    pub fn n_classes(&self) -> usize {
        AbsenteeismClass::COUNT
    }

    /// Training rows drawn for tree `t`, with multiplicity.
    pub fn in_bag_rows(&self, t: usize) -> Vec<usize> {
        if self.bootstrap {
            bootstrap_rows(self.tree_seeds[t], self.n_train_rows)
        } else {
            (0..self.n_train_rows).collect()
        }
    }

    /// Training rows tree `t` never saw.
    pub fn out_of_bag_rows(&self, t: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n_train_rows];
        for r in self.in_bag_rows(t) {
            seen[r] = true;
        }
        (0..self.n_train_rows).filter(|&r| !seen[r]).collect()
    }

    pub fn votes(&self, x: &[T]) -> Result<Vec<usize>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut votes = vec![0usize; self.n_classes()];
        for t in &self.trees {
            votes[t.predict_index(x)] += 1;
        }
        Ok(votes)
    }

    /// Plurality vote, ties toward the lower class index.
    pub fn predict_index(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.votes(x)?))
    }

    /// Vote shares, used as ranking scores.
    pub fn vote_shares(&self, x: &[T]) -> Result<Vec<f64>> {
        let n = self.trees.len().max(1) as f64;
        Ok(self.votes(x)?.into_iter().map(|v| v as f64 / n).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() || self.trees.len() != self.tree_seeds.len() {
            return Err(Error::InvalidParameter("forest needs one seed per tree and at least one tree".into()));
        }
        for t in &self.trees {
            t.validate(self.n_features, self.n_classes())?;
        }
        Ok(())
    }
}

pub fn forest_fit<T: Scalar>(x: &Matrix<T>, labels: &[AbsenteeismClass], config: &ForestConfig) -> Result<ForestModel<T>> {
    let n = x.rows();
    if n == 0 || x.cols() == 0 {
        return Err(Error::EmptyInput("no rows".into()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let d = x.cols();
    let max_features = config
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let y: Vec<usize> = labels.iter().map(|c| c.index()).collect();
    let mut master = RngStream::new(config.seed);
    let tree_seeds: Vec<u64> = (0..config.n_trees).map(|_| master.next_u64()).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&seed| {
            let rows = if config.bootstrap {
                bootstrap_rows(seed, n)
            } else {
                (0..n).collect()
            };
            let mut rng = RngStream::derive(seed, 0xFEA7);
            grow_tree(x, &y, AbsenteeismClass::COUNT, rows, max_features, config.min_samples_split, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        tree_seeds,
        max_features,
        n_features: d,
        n_train_rows: n,
        bootstrap: config.bootstrap,
    })
}

pub fn forest_fit_encoded<T: Scalar>(matrix: &EncodedMatrix<T>, config: &ForestConfig) -> Result<ForestModel<T>> {
    forest_fit(&matrix.values, &matrix.labels, config)
}

pub fn forest_predict<T: Scalar>(model: &ForestModel<T>, x: &[T]) -> Result<AbsenteeismClass> {
    let i = model.predict_index(x)?;
    AbsenteeismClass::from_index(i).ok_or_else(|| Error::InvalidParameter(format!("class index {i}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub names: Vec<String>,
    /// Per-column score, in schema order; sums to 1.
    pub scores: Vec<f64>,
    /// Column indices by descending score (ties by index).
    pub ranking: Vec<usize>,
}

impl ImportanceReport {
    pub fn top(&self, k: usize) -> Vec<(&str, f64)> {
        self.ranking
            .iter()
            .take(k)
            .map(|&i| (self.names[i].as_str(), self.scores[i]))
            .collect()
    }
}

/// Mean decrease in impurity: for each column, `Σ n_node · decrease` over
/// every split on it in every tree, normalized to sum 1.
pub fn feature_importance<T: Scalar>(model: &ForestModel<T>, schema: &FeatureSchema) -> Result<ImportanceReport> {
    if schema.len() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            found: schema.len(),
        });
    }
    let mut raw = vec![0.0f64; model.n_features];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let Node::Split {
                feature,
                n_rows,
                decrease,
                ..
            } = node
            {
                raw[*feature] += *n_rows as f64 * decrease;
            }
        }
    }
    let total: f64 = raw.iter().sum();
    let scores: Vec<f64> = if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; raw.len()]
    };
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(ImportanceReport {
        names: schema.columns.iter().map(|c| c.name.clone()).collect(),
        scores,
        ranking,
    })
}
