use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EncodedMatrix;
use crate::error::{Error, Result};
use crate::ingest::AbsenteeismClass;
use crate::numerics::{squared_distance, Matrix, RngStream, Scalar};

pub const DEFAULT_SMOTE_K: usize = 5;

/// Where a synthetic row came from: `base + u · (neighbor - base)`, both
/// indices into the input matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrigin {
    pub base: usize,
    pub neighbor: usize,
    pub u: f64,
}

#[derive(Debug, Clone)]
pub struct SmoteOutput<T> {
    /// Input rows unchanged and in order, followed by synthetic rows.
    pub matrix: EncodedMatrix<T>,
    pub origins: Vec<SyntheticOrigin>,
}

/// `k` nearest same-class neighbours (Euclidean) of every member; ties go to
/// the lower row index.
fn neighbours<T: Scalar>(values: &Matrix<T>, members: &[usize], k: usize) -> Vec<Vec<usize>> {
    members
        .par_iter()
        .map(|&i| {
            let mut d: Vec<(T, usize)> = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (squared_distance(values.row(i), values.row(j)), j))
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Raises every class to the majority-class count with synthetic
/// interpolations between a class member and one of its `k` nearest
/// same-class neighbours.
pub fn smote_oversample<T: Scalar>(matrix: &EncodedMatrix<T>, k: usize, seed: u64) -> Result<SmoteOutput<T>> {
    if k == 0 {
        return Err(Error::InvalidParameter("SMOTE needs k >= 1".into()));
    }
    let counts = matrix.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut values = matrix.values.values().to_vec();
    let mut labels = matrix.labels.clone();
    let mut origins = Vec::new();
    let cols = matrix.cols();

    for class in AbsenteeismClass::ALL {
        let have = counts[class.index()];
        if have == 0 || have == target {
            continue;
        }
        if have <= k {
            return Err(Error::SmoteNeighbors {
                class: class.to_string(),
                count: have,
                k,
            });
        }
        let members: Vec<usize> = (0..matrix.rows()).filter(|&i| matrix.labels[i] == class).collect();
        let nn = neighbours(&matrix.values, &members, k);
        let mut rng = RngStream::derive(seed, class.index() as u64);
        for _ in 0..target - have {
            let pick = rng.next_below(members.len());
            let base = members[pick];
            let neighbor = nn[pick][rng.next_below(nn[pick].len())];
            let u = rng.next_f64_closed();
            let ut = T::of(u);
            let (x, z) = (matrix.row(base), matrix.row(neighbor));
            values.extend(x.iter().zip(z).map(|(&a, &b)| (a + ut * (b - a)).max(a.min(b)).min(a.max(b))));
            labels.push(class);
            origins.push(SyntheticOrigin { base, neighbor, u });
        }
    }
    let rows = labels.len();
    let matrix = EncodedMatrix::new(Matrix::from_raw(rows, cols, values), matrix.schema.clone(), labels)?;
    Ok(SmoteOutput { matrix, origins })
}
