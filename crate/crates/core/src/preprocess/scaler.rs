use serde::{Deserialize, Serialize};

use super::EncodedMatrix;
use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Per-column min/max fitted on training rows; `None` for one-hot columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub ranges: Vec<Option<(f64, f64)>>,
}

impl ScalerParams {
    /// Scales one row in place: `(x - min) / (max - min)`, 0 for constant columns.
    pub fn apply_row<T: Scalar>(&self, row: &mut [T]) -> Result<()> {
        if row.len() != self.ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ranges.len(),
                found: row.len(),
            });
        }
        for (v, range) in row.iter_mut().zip(&self.ranges) {
            if let Some((lo, hi)) = *range {
                *v = if hi > lo {
                    (*v - T::of(lo)) / T::of(hi - lo)
                } else {
                    T::zero()
                };
            }
        }
        Ok(())
    }

    /// Inverse of [`apply_row`](Self::apply_row) for non-constant columns.
    pub fn invert_row<T: Scalar>(&self, row: &mut [T]) {
        for (v, range) in row.iter_mut().zip(&self.ranges) {
            if let Some((lo, hi)) = *range {
                *v = *v * T::of(hi - lo) + T::of(lo);
            }
        }
    }
}

pub fn fit_scaler<T: Scalar>(matrix: &EncodedMatrix<T>, rows: &[usize]) -> Result<ScalerParams> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("scaler needs at least one fitting row".into()));
    }
    let ranges = matrix
        .schema
        .columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            col.is_numeric().then(|| {
                rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = matrix.values.get(i, j).as_f64();
                    (lo.min(v), hi.max(v))
                })
            })
        })
        .collect();
    Ok(ScalerParams { ranges })
}

pub fn apply_scaler<T: Scalar>(matrix: &EncodedMatrix<T>, params: &ScalerParams) -> Result<EncodedMatrix<T>> {
    let mut out = matrix.clone();
    for i in 0..out.rows() {
        params.apply_row(out.values.row_mut(i))?;
    }
    Ok(out)
}
