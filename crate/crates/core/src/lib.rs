//! Absenteeism-class prediction from hire-time attributes.
//!
//! The pipeline parses the 21-attribute absenteeism dataset, keeps the 13
//! attributes known when hiring, one-hot encodes them into a numeric design
//! matrix, and trains four classifiers: multinomial logistic regression
//! (Newton), one-vs-rest RBF SVM (SMO), a multilayer perceptron and a
//! Gini random forest. Models are compared on weighted metrics, and the
//! selected one is persisted as a checksummed bundle for serving.
//!
//! The numerical core is generic over [`numerics::Scalar`] (`f32` or `f64`);
//! the aliases below fix the `f64` instantiation used by the pipeline.

pub mod ann;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod mlr;
pub mod model;
pub mod numerics;
pub mod persistence;
pub mod preprocess;
pub mod rf;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result};
pub use ingest::{AbsenteeismClass, Attribute, HireTimeRecord, Predictors, RawRecord};
pub use model::{ModelKind, Prediction, TrainedModel};

pub type Matrix = numerics::Matrix<f64>;
pub type EncodedMatrix = preprocess::EncodedMatrix<f64>;
pub type MlrModel = mlr::MlrModel<f64>;
pub type BinarySvmModel = svm::BinarySvmModel<f64>;
pub type OvrSvmModel = svm::OvrSvmModel<f64>;
pub type KernelSpec = svm::KernelSpec<f64>;
pub type MlpModel = ann::MlpModel<f64>;
pub type DecisionTree = rf::DecisionTree<f64>;
pub type ForestModel = rf::ForestModel<f64>;
