use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AbsenteeismClass;
use crate::numerics::RngStream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

fn rows_by_class(labels: &[AbsenteeismClass]) -> [Vec<usize>; 3] {
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    by_class
}

/// Per-class shuffled split; each class sends `round(ratio · n_c)` rows to
/// training, clamped so both sides keep at least one row.
pub fn stratified_split(labels: &[AbsenteeismClass], ratio: f64, seed: u64) -> Result<SplitIndices> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut rows) in rows_by_class(labels).into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: AbsenteeismClass::ALL[c].to_string(),
                count: rows.len(),
                needed: 2,
            });
        }
        let mut rng = RngStream::derive(seed, c as u64);
        rng.shuffle(&mut rows);
        let n_train = ((ratio * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        train.extend_from_slice(&rows[..n_train]);
        test.extend_from_slice(&rows[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}

/// Stratified k-fold assignment: returns, for each fold, the held-out
/// positions into `labels`.
pub fn stratified_folds(labels: &[AbsenteeismClass], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    if labels.len() < folds {
        return Err(Error::InvalidParameter(format!(
            "{} rows cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for (c, mut rows) in rows_by_class(labels).into_iter().enumerate() {
        let mut rng = RngStream::derive(seed ^ 0xF01D, c as u64);
        rng.shuffle(&mut rows);
        for r in rows {
            out[offset % folds].push(r);
            offset += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}
