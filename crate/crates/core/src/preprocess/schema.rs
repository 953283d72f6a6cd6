use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Attribute, AttributeKind, HireTimeRecord, Predictors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric {
        /// Smallest and largest raw value seen when the schema was built.
        observed_min: f64,
        observed_max: f64,
    },
    OneHot {
        value: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub attribute: Attribute,
    pub kind: ColumnKind,
}

impl Column {
    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, ColumnKind::Numeric { .. })
    }

    /// Label in the style of the published importance table, e.g. `Reason for absence-19`.
    pub fn display_name(&self) -> String {
        match self.kind {
            ColumnKind::Numeric { .. } => self.attribute.display_name().to_string(),
            ColumnKind::OneHot { value } => format!("{}-{value}", self.attribute.display_name()),
        }
    }
}

/// Ordered column layout of the design matrix: numeric attributes first in
/// predictor order, then one one-hot group per categorical attribute with
/// levels in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Levels of a categorical attribute, ascending.
    pub fn categories(&self, attribute: Attribute) -> Vec<i64> {
        self.columns
            .iter()
            .filter(|c| c.attribute == attribute)
            .filter_map(|c| match c.kind {
                ColumnKind::OneHot { value } => Some(value),
                ColumnKind::Numeric { .. } => None,
            })
            .collect()
    }

    /// Observed raw range of a numeric or binary attribute.
    pub fn observed_range(&self, attribute: Attribute) -> Option<(f64, f64)> {
        self.columns.iter().find_map(|c| match c.kind {
            ColumnKind::Numeric {
                observed_min,
                observed_max,
            } if c.attribute == attribute => Some((observed_min, observed_max)),
            _ => None,
        })
    }

    /// Contiguous column range of each one-hot group.
    pub fn one_hot_groups(&self) -> Vec<(Attribute, Range<usize>)> {
        let mut groups: Vec<(Attribute, Range<usize>)> = Vec::new();
        for (i, c) in self.columns.iter().enumerate() {
            if let ColumnKind::OneHot { .. } = c.kind {
                match groups.last_mut() {
                    Some((a, r)) if *a == c.attribute && r.end == i => r.end = i + 1,
                    _ => groups.push((c.attribute, i..i + 1)),
                }
            }
        }
        groups
    }

    /// Column indices whose source attribute is not in `excluded`.
    pub fn columns_excluding(&self, excluded: &[Attribute]) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| !excluded.contains(&self.columns[i].attribute))
            .collect()
    }

    /// Sub-schema holding the given columns, in order.
    pub fn select(&self, indices: &[usize]) -> FeatureSchema {
        FeatureSchema {
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }

    /// Raw (unscaled) encoding of one predictor set.
    pub fn encode_row(&self, p: &Predictors) -> Result<Vec<f64>> {
        let mut row = vec![0.0; self.columns.len()];
        for attribute in Attribute::ALL {
            let value = p.get(attribute);
            match attribute.kind() {
                AttributeKind::Categorical => {
                    let code = value as i64;
                    let hit = self.columns.iter().position(|c| {
                        c.attribute == attribute && c.kind == ColumnKind::OneHot { value: code }
                    });
                    let has_group = self.columns.iter().any(|c| c.attribute == attribute);
                    match hit {
                        Some(j) => row[j] = 1.0,
                        None if has_group => {
                            return Err(Error::UnseenCategory {
                                attribute: attribute.name().to_string(),
                                value: code,
                            })
                        }
                        None => {}
                    }
                }
                AttributeKind::Numeric | AttributeKind::Binary => {
                    if let Some(j) = self
                        .columns
                        .iter()
                        .position(|c| c.attribute == attribute && c.is_numeric())
                    {
                        row[j] = value;
                    }
                }
            }
        }
        Ok(row)
    }

    /// Categorical codes recovered from the one-hot groups of an encoded row
    /// (the hot level is the group's largest entry).
    pub fn decode_categoricals(&self, row: &[f64]) -> Vec<(Attribute, i64)> {
        self.one_hot_groups()
            .into_iter()
            .map(|(a, range)| {
                let best = range
                    .clone()
                    .max_by(|&x, &y| row[x].total_cmp(&row[y]).then(y.cmp(&x)))
                    .expect("non-empty group");
                match self.columns[best].kind {
                    ColumnKind::OneHot { value } => (a, value),
                    ColumnKind::Numeric { .. } => unreachable!(),
                }
            })
            .collect()
    }
}

/// Builds the column layout, discovering category levels from the records.
pub fn build_schema(records: &[HireTimeRecord]) -> Result<FeatureSchema> {
    if records.is_empty() {
        return Err(Error::EmptyInput("cannot build a schema from no records".into()));
    }
    let mut columns = Vec::new();
    for attribute in Attribute::ALL {
        if attribute.kind() == AttributeKind::Categorical {
            continue;
        }
        let (lo, hi) = records.iter().map(|r| r.predictors.get(attribute)).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), v| (lo.min(v), hi.max(v)),
        );
        columns.push(Column {
            name: attribute.name().to_string(),
            attribute,
            kind: ColumnKind::Numeric {
                observed_min: lo,
                observed_max: hi,
            },
        });
    }
    for attribute in Attribute::ALL {
        if attribute.kind() != AttributeKind::Categorical {
            continue;
        }
        let levels: BTreeSet<i64> = records
            .iter()
            .map(|r| r.predictors.get(attribute) as i64)
            .collect();
        for value in levels {
            columns.push(Column {
                name: format!("{}={value}", attribute.name()),
                attribute,
                kind: ColumnKind::OneHot { value },
            });
        }
    }
    Ok(FeatureSchema { columns })
}
