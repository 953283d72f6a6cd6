//! Confusion-matrix metrics with support-weighted multiclass averaging and a
//! prevalence-weighted one-vs-one ROC AUC.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count grid: rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// True-class counts.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// One-vs-rest collapse `(TP, TN, FP, FN)` for one class.
    pub fn binary_collapse(&self, class: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[class][class];
        let fn_ = self.support(class) - tp;
        let fp = self.predicted(class) - tp;
        let tn = self.total() - tp - fn_ - fp;
        (tp, tn, fp, fn_)
    }
}

/// Tallies `(truth, predicted)` pairs of class indices below `n_classes`.
pub fn confusion(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("no labels to compare".into()));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidParameter(format!("label out of range: {t}/{p}")));
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

fn nonempty(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::EmptyInput("confusion matrix is empty".into())),
        t => Ok(t as f64),
    }
}

/// `(TP + TN) / total` summed over the diagonal, i.e. trace / total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(cm.trace() as f64 / nonempty(cm)?)
}

/// `TP / (TP + FP)` per class; `None` when the class is never predicted.
pub fn per_class_precision(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.n_classes())
        .map(|c| match cm.predicted(c) {
            0 => None,
            p => Some(cm.get(c, c) as f64 / p as f64),
        })
        .collect()
}

/// `TP / (TP + FN)` per class; `None` when the class has no true samples.
pub fn per_class_recall(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.n_classes())
        .map(|c| match cm.support(c) {
            0 => None,
            s => Some(cm.get(c, c) as f64 / s as f64),
        })
        .collect()
}

fn support_weighted(cm: &ConfusionMatrix, per_class: impl Iterator<Item = f64>) -> Result<f64> {
    let total = nonempty(cm)?;
    // Divide once at the end so all-ones inputs give exactly one.
    Ok(per_class
        .enumerate()
        .map(|(c, v)| cm.support(c) as f64 * v)
        .sum::<f64>()
        / total)
}

/// Support-weighted precision. A class with support but no predictions
/// contributes zero.
pub fn precision_weighted(cm: &ConfusionMatrix) -> Result<f64> {
    let per = per_class_precision(cm);
    for (c, p) in per.iter().enumerate() {
        if p.is_none() && cm.support(c) > 0 {
            log::warn!("class {c} is never predicted; its precision counts as 0");
        }
    }
    support_weighted(cm, per.into_iter().map(|p| p.unwrap_or(0.0)))
}

/// Support-weighted recall; equals accuracy.
pub fn recall_weighted(cm: &ConfusionMatrix) -> Result<f64> {
    support_weighted(cm, per_class_recall(cm).into_iter().map(|r| r.unwrap_or(0.0)))
}

/// `(1 + α²) · p · r / (α² · (p + r))`, defined as 0 when `p + r = 0`.
/// With `α = 1` this is the harmonic mean of precision and recall.
pub fn f_score(p: f64, r: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "F-score balance must be positive, got {alpha}"
        )));
    }
    if p + r == 0.0 {
        return Ok(0.0);
    }
    let a2 = alpha * alpha;
    Ok((1.0 + a2) * p * r / (a2 * (p + r)))
}

/// Support-weighted mean of per-class F1 scores.
pub fn f1_weighted(cm: &ConfusionMatrix) -> Result<f64> {
    let p = per_class_precision(cm);
    let r = per_class_recall(cm);
    let per: Vec<f64> = p
        .iter()
        .zip(&r)
        .map(|(p, r)| f_score(p.unwrap_or(0.0), r.unwrap_or(0.0), 1.0))
        .collect::<Result<_>>()?;
    support_weighted(cm, per.into_iter())
}

/// Exact Mann-Whitney count for scores of `pos` vs `neg` samples: the number
/// of correctly ordered pairs plus half the ties, returned doubled so it stays
/// an integer.
fn doubled_pair_wins(pos: &[f64], neg: &[f64]) -> u64 {
    // Midranks over the pooled sample; sum of positive ranks gives wins.
    let mut pooled: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Doubled ranks keep midranks integral.
    let mut doubled_rank_sum: u64 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1, midrank doubled = i + j + 2
        let doubled_mid = (i + j + 2) as u64;
        let n_pos = pooled[i..=j].iter().filter(|e| e.1).count() as u64;
        doubled_rank_sum += n_pos * doubled_mid;
        i = j + 1;
    }
    let n = pos.len() as u64;
    doubled_rank_sum - n * (n + 1)
}

/// Prevalence-weighted one-vs-one ROC AUC.
///
/// For each unordered class pair `(i, j)` the samples of those two classes
/// are ranked by probability column `i` (giving `A(i|j)`) and by column `j`
/// (giving `A(j|i)`); ties count one half. The pair score is the mean of the
/// two, weighted by the number of samples in the pair. Pairs with a missing
/// class are skipped.
pub fn roc_auc_ovo_weighted(truth: &[usize], probabilities: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != probabilities.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: probabilities.len(),
        });
    }
    let n_classes = probabilities.first().map_or(0, Vec::len);
    if probabilities.iter().any(|r| r.len() != n_classes) {
        return Err(Error::ShapeMismatch("ragged probability rows".into()));
    }
    let mut numerator = 0.0;
    let mut weight_total = 0.0;
    for i in 0..n_classes {
        for j in i + 1..n_classes {
            let col = |c: usize, class: usize| -> Vec<f64> {
                truth
                    .iter()
                    .zip(probabilities)
                    .filter(|(&t, _)| t == class)
                    .map(|(_, p)| p[c])
                    .collect()
            };
            let (ni, nj) = (
                truth.iter().filter(|&&t| t == i).count(),
                truth.iter().filter(|&&t| t == j).count(),
            );
            if ni == 0 || nj == 0 {
                log::warn!("skipping class pair ({i}, {j}): a class has no samples");
                continue;
            }
            let pairs = (ni * nj) as f64;
            let a_ij = doubled_pair_wins(&col(i, i), &col(i, j)) as f64 / (2.0 * pairs);
            let a_ji = doubled_pair_wins(&col(j, j), &col(j, i)) as f64 / (2.0 * pairs);
            let weight = (ni + nj) as f64;
            numerator += weight * (a_ij + a_ji) / 2.0;
            weight_total += weight;
        }
    }
    if weight_total == 0.0 {
        return Err(Error::NoClassPairs);
    }
    Ok(numerator / weight_total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    /// `None` when no class pair could be scored.
    pub roc_auc_ovo_weighted: Option<f64>,
    pub per_class_recall: Vec<Option<f64>>,
}

impl MetricsReport {
    /// Computes every metric; `probabilities` may be omitted when the model
    /// has no scores.
    pub fn compute(truth: &[usize], predicted: &[usize], probabilities: Option<&[Vec<f64>]>, n_classes: usize) -> Result<(Self, ConfusionMatrix)> {
        let cm = confusion(truth, predicted, n_classes)?;
        let auc = match probabilities {
            Some(p) => match roc_auc_ovo_weighted(truth, p) {
                Ok(v) => Some(v),
                Err(Error::NoClassPairs) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        let report = Self {
            accuracy: accuracy(&cm)?,
            precision_weighted: precision_weighted(&cm)?,
            recall_weighted: recall_weighted(&cm)?,
            f1_weighted: f1_weighted(&cm)?,
            roc_auc_ovo_weighted: auc,
            per_class_recall: per_class_recall(&cm),
        };
        Ok((report, cm))
    }

    /// Flat `key = value` block, one metric per line.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "missing".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(s, "accuracy = {:.6}", self.accuracy);
        let _ = writeln!(s, "precision_weighted = {:.6}", self.precision_weighted);
        let _ = writeln!(s, "recall_weighted = {:.6}", self.recall_weighted);
        let _ = writeln!(s, "f1_weighted = {:.6}", self.f1_weighted);
        let _ = writeln!(s, "roc_auc_ovo_weighted = {}", opt(self.roc_auc_ovo_weighted));
        for (c, r) in self.per_class_recall.iter().enumerate() {
            let label = crate::ingest::AbsenteeismClass::from_index(c)
                .map_or_else(|| c.to_string(), |l| l.to_string());
            let _ = writeln!(s, "recall[{label}] = {}", opt(*r));
        }
        s
    }
}
