//! HTTP front end for a persisted absenteeism-class model.
//!
//! [`PredictionService`] holds the loaded bundle and turns request documents
//! into responses or [`Fault`]s without touching any I/O; [`http::router`]
//! wires it to axum. A service is immutable once built, so handlers share it
//! through an `Arc` and a reload means building a new one.

pub mod http;

use std::collections::BTreeMap;
use std::path::Path;

use absenteeism_core::ingest::AttributeKind;
use absenteeism_core::metrics::MetricsReport;
use absenteeism_core::persistence::{parse_bundle, verify_checksum, ModelBundle};
use absenteeism_core::{AbsenteeismClass, Attribute, Error as CoreError, ModelKind, Predictors};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use http::{router, serve};

/// Error document returned for every failed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub code: String,
    pub message: String,
    /// Request fields the fault refers to, if any.
    pub fields: Vec<String>,
    #[serde(skip)]
    pub status: u16,
}

impl Fault {
    fn new(status: u16, code: &str, message: impl Into<String>, fields: Vec<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            fields,
            status,
        }
    }

    pub fn no_model() -> Self {
        Self::new(503, "model_unavailable", "no model is loaded", Vec::new())
    }

    pub fn malformed(detail: impl std::fmt::Display) -> Self {
        Self::new(400, "malformed_request", format!("request body is not a JSON document: {detail}"), Vec::new())
    }

    pub fn not_found(path: &str) -> Self {
        Self::new(404, "not_found", format!("no resource at {path}"), Vec::new())
    }

    fn internal(e: CoreError) -> Self {
        Self::new(500, "internal", e.to_string(), Vec::new())
    }
}

/// One candidate prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    /// Predicted label on the A+/B+/C+ scale.
    pub class: AbsenteeismClass,
    pub kind: ModelKind,
    /// Class labels in the order of `scores` and `probabilities`.
    pub classes: Vec<AbsenteeismClass>,
    /// Present for models with calibrated probabilities (MLR, ANN).
    pub probabilities: Option<Vec<f64>>,
    pub scores: Vec<f64>,
    /// `probability`, `decision_value` or `vote_share`.
    pub score_kind: String,
    pub model_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub name: String,
    pub label: String,
    pub kind: AttributeKind,
    /// Whole numbers only.
    pub integer: bool,
    /// Allowed codes for categorical and binary attributes.
    pub categories: Option<Vec<i64>>,
    /// Raw range seen in training, as an input hint.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDocument {
    pub attributes: Vec<AttributeDescriptor>,
    pub classes: Vec<AbsenteeismClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthDocument {
    pub status: String,
    pub ready: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: ModelKind,
    /// The bundle's checksum field.
    pub digest: String,
    pub manifest_digest: String,
    pub input_columns: usize,
    pub schema_columns: usize,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug)]
struct Loaded {
    bundle: ModelBundle,
    checksum: String,
}

/// Request handling as pure functions of (bundle, request).
#[derive(Debug, Default)]
pub struct PredictionService {
    loaded: Option<Loaded>,
}

fn integer_attribute(a: Attribute) -> bool {
    matches!(
        a,
        Attribute::ReasonForAbsence | Attribute::Education | Attribute::Son | Attribute::SocialDrinker | Attribute::SocialSmoker | Attribute::Pet
    )
}

fn integer_limit(a: Attribute) -> u64 {
    match a {
        Attribute::ReasonForAbsence | Attribute::Education => u8::MAX as u64,
        Attribute::SocialDrinker | Attribute::SocialSmoker => 1,
        _ => u32::MAX as u64,
    }
}

impl PredictionService {
    /// A service with no model; only health answers successfully.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_bundle_bytes(bytes: &[u8]) -> absenteeism_core::Result<Self> {
        let checksum = verify_checksum(bytes)?;
        let bundle = parse_bundle(bytes)?;
        Ok(Self {
            loaded: Some(Loaded { bundle, checksum }),
        })
    }

    pub fn from_file(path: &Path) -> absenteeism_core::Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CoreError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_bundle_bytes(&bytes)
    }

    pub fn is_ready(&self) -> bool {
        self.loaded.is_some()
    }

    pub fn bundle(&self) -> Option<&ModelBundle> {
        self.loaded.as_ref().map(|l| &l.bundle)
    }

    fn require(&self) -> Result<&Loaded, Fault> {
        self.loaded.as_ref().ok_or_else(Fault::no_model)
    }

    pub fn health(&self) -> HealthDocument {
        HealthDocument {
            status: if self.is_ready() { "ready" } else { "not-ready" }.into(),
            ready: self.is_ready(),
        }
    }

    pub fn model_info(&self) -> Result<ModelInfo, Fault> {
        let l = self.require()?;
        let m = &l.bundle.model;
        Ok(ModelInfo {
            kind: m.kind(),
            digest: l.checksum.clone(),
            manifest_digest: l.bundle.manifest_digest.clone(),
            input_columns: m.params.n_inputs(),
            schema_columns: m.schema.len(),
            metrics: l.bundle.metrics.clone(),
        })
    }

    pub fn schema(&self) -> Result<SchemaDocument, Fault> {
        let schema = &self.require()?.bundle.model.schema;
        let attributes = Attribute::ALL
            .into_iter()
            .map(|a| {
                let (categories, range) = match a.kind() {
                    AttributeKind::Categorical => (Some(schema.categories(a)), None),
                    AttributeKind::Binary => (Some(vec![0, 1]), schema.observed_range(a)),
                    AttributeKind::Numeric => (None, schema.observed_range(a)),
                };
                AttributeDescriptor {
                    name: a.name().to_string(),
                    label: a.display_name().to_string(),
                    kind: a.kind(),
                    integer: integer_attribute(a),
                    categories,
                    min: range.map(|r| r.0),
                    max: range.map(|r| r.1),
                }
            })
            .collect();
        Ok(SchemaDocument {
            attributes,
            classes: AbsenteeismClass::ALL.to_vec(),
        })
    }

    /// Validates a request document field by field.
    pub fn parse_candidate(&self, body: &Value) -> Result<Predictors, Fault> {
        let loaded = self.require()?;
        let Some(obj) = body.as_object() else {
            return Err(Fault::new(422, "invalid_input", "request must be an object of the 13 attributes", Vec::new()));
        };
        let mut problems: BTreeMap<String, String> = BTreeMap::new();
        for key in obj.keys() {
            if Attribute::from_name(key).is_none() {
                problems.insert(key.clone(), "unknown field".into());
            }
        }
        let mut clean = Map::new();
        for a in Attribute::ALL {
            let name = a.name();
            match obj.get(name) {
                None => {
                    problems.insert(name.into(), "missing".into());
                }
                Some(v) => match check_value(a, v) {
                    Ok(v) => {
                        clean.insert(name.into(), v);
                    }
                    Err(why) => {
                        problems.insert(name.into(), why);
                    }
                },
            }
        }
        if !problems.is_empty() {
            let message = problems.iter().map(|(k, v)| format!("{k}: {v}")).collect::<Vec<_>>().join("; ");
            return Err(Fault::new(422, "invalid_input", message, problems.into_keys().collect()));
        }
        let predictors: Predictors = serde_json::from_value(Value::Object(clean))
            .map_err(|e| Fault::new(422, "invalid_input", e.to_string(), Vec::new()))?;
        let schema = &loaded.bundle.model.schema;
        for a in Attribute::ALL.into_iter().filter(|a| a.kind() == AttributeKind::Categorical) {
            let value = predictors.get(a) as i64;
            if !schema.categories(a).contains(&value) {
                return Err(Fault::new(
                    422,
                    "unknown_category",
                    format!("{}: value {value} is not in the model's schema", a.name()),
                    vec![a.name().to_string()],
                ));
            }
        }
        Ok(predictors)
    }

    pub fn predict_candidate(&self, predictors: &Predictors) -> Result<PredictionResponse, Fault> {
        let loaded = self.require()?;
        let p = loaded.bundle.model.predict(predictors).map_err(|e| match e {
            CoreError::UnseenCategory { ref attribute, .. } => {
                Fault::new(422, "unknown_category", e.to_string(), vec![attribute.clone()])
            }
            other => Fault::internal(other),
        })?;
        let score_kind = match p.kind {
            ModelKind::Mlr | ModelKind::Ann => "probability",
            ModelKind::Svm => "decision_value",
            ModelKind::Rf => "vote_share",
        };
        Ok(PredictionResponse {
            class: p.class,
            kind: p.kind,
            classes: AbsenteeismClass::ALL.to_vec(),
            probabilities: p.probabilities,
            scores: p.scores,
            score_kind: score_kind.into(),
            model_digest: loaded.checksum.clone(),
        })
    }

    pub fn predict(&self, body: &Value) -> Result<PredictionResponse, Fault> {
        let predictors = self.parse_candidate(body)?;
        self.predict_candidate(&predictors)
    }

    /// Parses raw request bytes and predicts.
    pub fn predict_bytes(&self, body: &[u8]) -> Result<PredictionResponse, Fault> {
        self.require()?;
        let value: Value = serde_json::from_slice(body).map_err(Fault::malformed)?;
        self.predict(&value)
    }
}

fn check_value(a: Attribute, v: &Value) -> Result<Value, String> {
    if integer_attribute(a) {
        let limit = integer_limit(a);
        let n = v
            .as_u64()
            .or_else(|| v.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0 && *f <= limit as f64).map(|f| f as u64))
            .ok_or_else(|| format!("expected a whole number from 0 to {limit}"))?;
        if n > limit {
            return Err(format!("expected a whole number from 0 to {limit}"));
        }
        Ok(Value::from(n))
    } else {
        match v.as_f64() {
            Some(f) if f.is_finite() => Ok(Value::from(f)),
            _ => Err("expected a number".into()),
        }
    }
}
