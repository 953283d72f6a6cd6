//! Design-matrix construction: one-hot encoding, min-max scaling, stratified
//! splitting and SMOTE rebalancing.

mod scaler;
mod schema;
mod smote;
mod split;

pub use scaler::{apply_scaler, fit_scaler, ScalerParams};
pub use schema::{build_schema, Column, ColumnKind, FeatureSchema};
pub use smote::{smote_oversample, SmoteOutput, SyntheticOrigin, DEFAULT_SMOTE_K};
pub use split::{stratified_folds, stratified_split, SplitIndices};

use crate::error::{Error, Result};
use crate::ingest::{AbsenteeismClass, HireTimeRecord};
use crate::numerics::{Matrix, Scalar};

/// Numeric design matrix with its column layout and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix<T> {
    pub values: Matrix<T>,
    pub schema: FeatureSchema,
    pub labels: Vec<AbsenteeismClass>,
}

impl<T: Scalar> EncodedMatrix<T> {
    pub fn new(values: Matrix<T>, schema: FeatureSchema, labels: Vec<AbsenteeismClass>) -> Result<Self> {
        if values.cols() != schema.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.len(),
                found: values.cols(),
            });
        }
        if labels.len() != values.rows() {
            return Err(Error::DimensionMismatch {
                expected: values.rows(),
                found: labels.len(),
            });
        }
        Ok(Self {
            values,
            schema,
            labels,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|c| c.index()).collect()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(indices),
            schema: self.schema.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn select_cols(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select_cols(indices),
            schema: self.schema.select(indices),
            labels: self.labels.clone(),
        }
    }
}

/// One-hot encodes records under `schema`.
pub fn encode<T: Scalar>(records: &[HireTimeRecord], schema: &FeatureSchema) -> Result<EncodedMatrix<T>> {
    let mut values = Vec::with_capacity(records.len() * schema.len());
    for r in records {
        values.extend(schema.encode_row(&r.predictors)?.into_iter().map(T::of));
    }
    let matrix = Matrix::new(records.len(), schema.len(), values)?;
    EncodedMatrix::new(matrix, schema.clone(), records.iter().map(|r| r.class).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Attribute, Predictors};
    use crate::synthetic;

    fn record(reason: u8, education: u8) -> HireTimeRecord {
        HireTimeRecord {
            predictors: Predictors {
                reason_for_absence: reason,
                transportation_expense: 200.0,
                distance_to_work: 10.0,
                age: 30.0,
                work_load_avg_per_day: 250.0,
                education,
                son: 1,
                social_drinker: 0,
                social_smoker: 0,
                pet: 0,
                weight: 80.0,
                height: 175.0,
                body_mass_index: 26.0,
            },
            class: AbsenteeismClass::BPlus,
        }
    }

    #[test]
    fn empty_schema_input_is_rejected() {
        assert!(build_schema(&[]).is_err());
    }

    #[test]
    fn observed_levels_become_columns() {
        let recs = vec![record(19, 1), record(23, 3), record(19, 3)];
        let schema = build_schema(&recs).unwrap();
        assert_eq!(schema.categories(Attribute::Education), vec![1, 3]);
        assert_eq!(schema.categories(Attribute::ReasonForAbsence), vec![19, 23]);
        // 11 numeric/binary columns + 2 reason + 2 education
        assert_eq!(schema.len(), 15);
        let names = schema.names();
        let mut dedup = names.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        assert!(schema.columns[..11].iter().all(Column::is_numeric));
    }

    #[test]
    fn one_hot_encoding_of_reason_and_education() {
        let recs = synthetic::generate(300, 1);
        let schema = build_schema(&recs).unwrap();
        let mut r = recs[0].clone();
        r.predictors.reason_for_absence = 19;
        r.predictors.education = 1;
        let m: EncodedMatrix<f64> = encode(&[r], &schema).unwrap();
        for c in schema.categories(Attribute::ReasonForAbsence) {
            let j = schema.index_of(&format!("reason_for_absence={c}")).unwrap();
            assert_eq!(m.row(0)[j], if c == 19 { 1.0 } else { 0.0 });
        }
        let edu: Vec<f64> = (1..=4)
            .map(|c| m.row(0)[schema.index_of(&format!("education={c}")).unwrap()])
            .collect();
        assert_eq!(edu, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn unseen_category_is_named() {
        let schema = build_schema(&[record(19, 1)]).unwrap();
        match encode::<f64>(&[record(23, 1)], &schema) {
            Err(Error::UnseenCategory { attribute, value }) => {
                assert_eq!(attribute, "reason_for_absence");
                assert_eq!(value, 23);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_group_sums_to_one_and_decodes() {
        let recs = synthetic::generate(500, 4);
        let schema = build_schema(&recs).unwrap();
        let m: EncodedMatrix<f64> = encode(&recs, &schema).unwrap();
        let groups = schema.one_hot_groups();
        assert_eq!(groups.len(), 2);
        for (i, r) in recs.iter().enumerate() {
            for (_, range) in &groups {
                let s: f64 = m.row(i)[range.clone()].iter().sum();
                assert_eq!(s, 1.0);
            }
            let decoded = schema.decode_categoricals(m.row(i));
            assert_eq!(
                decoded,
                vec![
                    (Attribute::ReasonForAbsence, r.predictors.reason_for_absence as i64),
                    (Attribute::Education, r.predictors.education as i64),
                ]
            );
        }
    }
}
