//! A fitted classifier together with the preprocessing needed to apply it to
//! raw hire-time attributes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ann::MlpModel;
use crate::error::{Error, Result};
use crate::ingest::{AbsenteeismClass, Predictors};
use crate::mlr::MlrModel;
use crate::numerics::{softmax, Scalar};
use crate::preprocess::{FeatureSchema, ScalerParams};
use crate::rf::ForestModel;
use crate::svm::OvrSvmModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlr,
    Svm,
    Ann,
    Rf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::Mlr, Self::Svm, Self::Ann, Self::Rf];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Mlr => "mlr",
            Self::Svm => "svm",
            Self::Ann => "ann",
            Self::Rf => "rf",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag.to_ascii_lowercase())
    }

    /// Whether the model yields calibrated class probabilities.
    pub fn has_probabilities(self) -> bool {
        matches!(self, Self::Mlr | Self::Ann)
    }

    /// Whether training rows are rebalanced with SMOTE.
    pub fn uses_smote(self) -> bool {
        !matches!(self, Self::Mlr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams<T> {
    Mlr(MlrModel<T>),
    Svm(OvrSvmModel<T>),
    Ann(MlpModel<T>),
    Rf(ForestModel<T>),
}

impl<T: Scalar> ModelParams<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Mlr(_) => ModelKind::Mlr,
            Self::Svm(_) => ModelKind::Svm,
            Self::Ann(_) => ModelKind::Ann,
            Self::Rf(_) => ModelKind::Rf,
        }
    }

    pub fn n_inputs(&self) -> usize {
        match self {
            Self::Mlr(m) => m.n_features(),
            Self::Svm(m) => m.n_features(),
            Self::Ann(m) => m.n_inputs(),
            Self::Rf(m) => m.n_features,
        }
    }
}

/// Output of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: AbsenteeismClass,
    pub kind: ModelKind,
    /// Class probabilities, for models that produce them.
    pub probabilities: Option<Vec<f64>>,
    /// Per-class scores: probabilities, SVM decision values or vote shares.
    pub scores: Vec<f64>,
}

impl Prediction {
    /// Scores usable for ranking metrics: probabilities where available,
    /// softmax of decision values for the SVM, vote shares for the forest.
    pub fn ranking_scores(&self) -> Vec<f64> {
        match (&self.probabilities, self.kind) {
            (Some(p), _) => p.clone(),
            (None, ModelKind::Svm) => softmax(&self.scores),
            (None, _) => self.scores.clone(),
        }
    }
}

/// Fitted parameters plus the encoding, scaling and column mask that map a
/// candidate's attributes to the model's input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel<T = f64> {
    pub params: ModelParams<T>,
    pub schema: FeatureSchema,
    pub scaler: ScalerParams,
    /// Schema columns fed to the model, when it uses a subset.
    pub mask: Option<Vec<usize>>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn new(params: ModelParams<T>, schema: FeatureSchema, scaler: ScalerParams, mask: Option<Vec<usize>>) -> Result<Self> {
        let m = Self {
            params,
            schema,
            scaler,
            mask,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scaler.ranges.len() != self.schema.len() {
            return Err(Error::DimensionMismatch {
                expected: self.schema.len(),
                found: self.scaler.ranges.len(),
            });
        }
        let width = match &self.mask {
            Some(mask) => {
                if let Some(&bad) = mask.iter().find(|&&i| i >= self.schema.len()) {
                    return Err(Error::InvalidParameter(format!("mask column {bad} outside schema")));
                }
                mask.len()
            }
            None => self.schema.len(),
        };
        if width != self.params.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: self.params.n_inputs(),
            });
        }
        match &self.params {
            ModelParams::Mlr(m) => {
                MlrModel::from_parts(m.intercepts().to_vec(), m.coefficients().clone())?;
            }
            ModelParams::Ann(m) => {
                MlpModel::from_layers(m.layers.clone())?;
            }
            ModelParams::Svm(m) => m.validate()?,
            ModelParams::Rf(f) => f.validate()?,
        }
        Ok(())
    }

    /// Applies the mask to an already scaled full-width row.
    pub fn select_inputs(&self, scaled: &[T]) -> Vec<T> {
        match &self.mask {
            Some(mask) => mask.iter().map(|&i| scaled[i]).collect(),
            None => scaled.to_vec(),
        }
    }

    /// Encodes, scales and masks a candidate's attributes.
    pub fn model_input(&self, predictors: &Predictors) -> Result<Vec<T>> {
        let mut row: Vec<T> = self.schema.encode_row(predictors)?.into_iter().map(T::of).collect();
        self.scaler.apply_row(&mut row)?;
        Ok(self.select_inputs(&row))
    }

    /// Predicts from a model-ready input row.
    pub fn predict_input(&self, x: &[T]) -> Result<Prediction> {
        let to_f64 = |v: Vec<T>| v.into_iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        let (index, probabilities, scores) = match &self.params {
            ModelParams::Mlr(m) => {
                let p = to_f64(m.predict_proba(x)?);
                (m.predict(x)?, Some(p.clone()), p)
            }
            ModelParams::Ann(m) => {
                let p = to_f64(m.forward(x)?);
                (m.predict_index(x)?, Some(p.clone()), p)
            }
            ModelParams::Svm(m) => {
                let d = m.decisions(x)?;
                (crate::numerics::argmax(&d), None, to_f64(d))
            }
            ModelParams::Rf(m) => (m.predict_index(x)?, None, m.vote_shares(x)?),
        };
        let class = AbsenteeismClass::from_index(index)
            .ok_or_else(|| Error::InvalidParameter(format!("class index {index}")))?;
        Ok(Prediction {
            class,
            kind: self.kind(),
            probabilities,
            scores,
        })
    }

    pub fn predict(&self, predictors: &Predictors) -> Result<Prediction> {
        self.predict_input(&self.model_input(predictors)?)
    }
}
