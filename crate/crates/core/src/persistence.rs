//! `.absmodel` bundles: a JSON document with one top-level field per line,
//! ending in a SHA-256 checksum of every preceding byte.
//!
//! ```text
//! {
//!   "version": 1,
//!   "kind": "mlr",
//!   "schema": {...},
//!   "scaler": {...},
//!   "mask": [...] | null,
//!   "params": {...},
//!   "manifest_digest": "…",
//!   "metrics": {...} | null,
//!   "checksum": "…"
//! }
//! ```
//!
//! Floats are written as shortest round-trip decimals and parsed back
//! exactly, so a reload reproduces every parameter bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{ModelKind, ModelParams, TrainedModel};
use crate::numerics::Scalar;
use crate::preprocess::{FeatureSchema, ScalerParams};

pub const BUNDLE_VERSION: u32 = 1;
pub const BUNDLE_EXTENSION: &str = "absmodel";

const CHECKSUM_KEY: &[u8] = b"  \"checksum\": \"";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T = f64> {
    pub model: TrainedModel<T>,
    /// Digest of the run manifest that produced the model.
    pub manifest_digest: String,
    /// Test-set metrics recorded at training time.
    pub metrics: Option<MetricsReport>,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn field<W: Write, V: Serialize + ?Sized>(out: &mut W, key: &str, value: &V) -> Result<()> {
    write!(out, "  \"{key}\": ")?;
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b",\n")?;
    Ok(())
}

/// Canonical bytes of a bundle. Saving the same bundle always yields the
/// same bytes.
pub fn bundle_bytes<T: Scalar + Serialize>(bundle: &ModelBundle<T>) -> Result<Vec<u8>> {
    bundle.model.validate()?;
    let m = &bundle.model;
    let mut out = Vec::new();
    out.extend_from_slice(b"{\n");
    field(&mut out, "version", &BUNDLE_VERSION)?;
    field(&mut out, "kind", m.kind().tag())?;
    field(&mut out, "schema", &m.schema)?;
    field(&mut out, "scaler", &m.scaler)?;
    field(&mut out, "mask", &m.mask)?;
    match &m.params {
        ModelParams::Mlr(p) => field(&mut out, "params", p)?,
        ModelParams::Svm(p) => field(&mut out, "params", p)?,
        ModelParams::Ann(p) => field(&mut out, "params", p)?,
        ModelParams::Rf(p) => field(&mut out, "params", p)?,
    }
    field(&mut out, "manifest_digest", &bundle.manifest_digest)?;
    field(&mut out, "metrics", &bundle.metrics)?;
    let checksum = sha256_hex(&out);
    out.extend_from_slice(format!("  \"checksum\": \"{checksum}\"\n}}\n").as_bytes());
    Ok(out)
}

/// Writes the bundle and returns the byte count.
pub fn save_bundle<T: Scalar + Serialize, W: Write>(bundle: &ModelBundle<T>, mut sink: W) -> Result<usize> {
    let bytes = bundle_bytes(bundle)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len())
}

pub fn save_bundle_file<T: Scalar + Serialize>(bundle: &ModelBundle<T>, path: &Path) -> Result<usize> {
    let bytes = bundle_bytes(bundle)?;
    std::fs::write(path, &bytes).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(bytes.len())
}

/// Stored checksum of a bundle, after verifying it against the payload.
pub fn verify_checksum(bytes: &[u8]) -> Result<String> {
    let at = bytes
        .windows(CHECKSUM_KEY.len())
        .rposition(|w| w == CHECKSUM_KEY)
        .ok_or_else(|| Error::Truncated("no checksum line".into()))?;
    let rest = &bytes[at + CHECKSUM_KEY.len()..];
    let end = rest
        .iter()
        .position(|&b| b == b'"')
        .ok_or_else(|| Error::Truncated("unterminated checksum".into()))?;
    let stored = String::from_utf8_lossy(&rest[..end]).into_owned();
    let computed = sha256_hex(&bytes[..at]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(stored)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    version: u32,
    kind: String,
    schema: FeatureSchema,
    scaler: ScalerParams,
    mask: Option<Vec<usize>>,
    params: serde_json::Value,
    manifest_digest: String,
    metrics: Option<MetricsReport>,
    #[allow(dead_code)]
    checksum: String,
}

fn params_as<P: DeserializeOwned>(v: serde_json::Value) -> Result<P> {
    serde_json::from_value(v).map_err(|e| Error::InvalidBundle(format!("params: {e}")))
}

/// Parses and validates bundle bytes: checksum first, then version, then kind.
pub fn parse_bundle<T: Scalar + DeserializeOwned>(bytes: &[u8]) -> Result<ModelBundle<T>> {
    verify_checksum(bytes)?;
    let raw: RawBundle = serde_json::from_slice(bytes).map_err(|e| {
        if e.is_eof() {
            Error::Truncated(e.to_string())
        } else {
            Error::InvalidBundle(e.to_string())
        }
    })?;
    if raw.version != BUNDLE_VERSION {
        return Err(Error::Version {
            found: raw.version,
            expected: BUNDLE_VERSION,
        });
    }
    let kind = ModelKind::from_tag(&raw.kind).ok_or_else(|| Error::UnknownKind(raw.kind.clone()))?;
    let params = match kind {
        ModelKind::Mlr => ModelParams::Mlr(params_as(raw.params)?),
        ModelKind::Svm => ModelParams::Svm(params_as(raw.params)?),
        ModelKind::Ann => ModelParams::Ann(params_as(raw.params)?),
        ModelKind::Rf => ModelParams::Rf(params_as(raw.params)?),
    };
    let model = TrainedModel::new(params, raw.schema, raw.scaler, raw.mask)
        .map_err(|e| Error::InvalidBundle(e.to_string()))?;
    Ok(ModelBundle {
        model,
        manifest_digest: raw.manifest_digest,
        metrics: raw.metrics,
    })
}

pub fn load_bundle<T: Scalar + DeserializeOwned, R: Read>(mut source: R) -> Result<ModelBundle<T>> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_bundle(&bytes)
}

pub fn load_bundle_file<T: Scalar + DeserializeOwned>(path: &Path) -> Result<ModelBundle<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_bundle(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::MlpModel;
    use crate::mlr::{mlr_fit_encoded, MlrConfig};
    use crate::preprocess::{build_schema, encode, fit_scaler, apply_scaler, EncodedMatrix};
    use crate::rf::{forest_fit_encoded, ForestConfig};
    use crate::svm::{svm_fit_ovr, KernelSpec, SmoConfig};
    use crate::synthetic;

    fn scaled(n: usize) -> (EncodedMatrix<f64>, ScalerParams, Vec<crate::HireTimeRecord>) {
        let records = synthetic::generate(n, 17);
        let schema = build_schema(&records).unwrap();
        let m = encode::<f64>(&records, &schema).unwrap();
        let rows: Vec<usize> = (0..m.rows()).collect();
        let scaler = fit_scaler(&m, &rows).unwrap();
        (apply_scaler(&m, &scaler).unwrap(), scaler, records)
    }

    fn bundle(params: ModelParams<f64>, data: &EncodedMatrix<f64>, scaler: &ScalerParams) -> ModelBundle<f64> {
        ModelBundle {
            model: TrainedModel::new(params, data.schema.clone(), scaler.clone(), None).unwrap(),
            manifest_digest: "ab".repeat(32),
            metrics: None,
        }
    }

    fn mlr_bundle() -> ModelBundle<f64> {
        let (data, scaler, _) = scaled(200);
        let (m, _) = mlr_fit_encoded(&data, &MlrConfig::default()).unwrap();
        bundle(ModelParams::Mlr(m), &data, &scaler)
    }

    #[test]
    fn mlr_round_trip_is_exact_and_canonical() {
        let b = mlr_bundle();
        let bytes = bundle_bytes(&b).unwrap();
        assert_eq!(bytes, bundle_bytes(&b).unwrap());
        let back: ModelBundle<f64> = parse_bundle(&bytes).unwrap();
        assert_eq!(back, b);
        let (ModelParams::Mlr(x), ModelParams::Mlr(y)) = (&b.model.params, &back.model.params) else {
            panic!("kind changed");
        };
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(x.flat_params()), bits(y.flat_params()));
        assert_eq!(bundle_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn top_level_fields_in_order_one_per_line() {
        let text = String::from_utf8(bundle_bytes(&mlr_bundle()).unwrap()).unwrap();
        let keys: Vec<&str> = text
            .lines()
            .filter_map(|l| l.strip_prefix("  \"").and_then(|r| r.split('"').next()))
            .collect();
        assert_eq!(keys, ["version", "kind", "schema", "scaler", "mask", "params", "manifest_digest", "metrics", "checksum"]);
        let stored = verify_checksum(text.as_bytes()).unwrap();
        let cut = text.find("  \"checksum\"").unwrap();
        assert_eq!(stored, sha256_hex(&text.as_bytes()[..cut]));
    }

    #[test]
    fn any_flipped_payload_byte_is_detected() {
        let bytes = bundle_bytes(&mlr_bundle()).unwrap();
        let cut = bytes.windows(CHECKSUM_KEY.len()).position(|w| w == CHECKSUM_KEY).unwrap();
        for pos in (0..cut).step_by(97) {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x01;
            assert!(
                matches!(parse_bundle::<f64>(&bad), Err(Error::Checksum { .. })),
                "flip at {pos} not caught"
            );
        }
    }

    #[test]
    fn truncation_and_garbage_are_errors() {
        let bytes = bundle_bytes(&mlr_bundle()).unwrap();
        for len in [0, 10, bytes.len() / 2, bytes.len() - 5] {
            assert!(parse_bundle::<f64>(&bytes[..len]).is_err());
        }
        assert!(parse_bundle::<f64>(b"not a bundle").is_err());
    }

    fn resign(text: &str) -> Vec<u8> {
        let cut = text.find("  \"checksum\"").unwrap();
        let body = &text[..cut];
        format!("{body}  \"checksum\": \"{}\"\n}}\n", sha256_hex(body.as_bytes())).into_bytes()
    }

    #[test]
    fn version_and_kind_are_checked() {
        let text = String::from_utf8(bundle_bytes(&mlr_bundle()).unwrap()).unwrap();
        let v2 = resign(&text.replacen("\"version\": 1,", "\"version\": 2,", 1));
        assert!(matches!(parse_bundle::<f64>(&v2), Err(Error::Version { found: 2, expected: 1 })));
        let knn = resign(&text.replacen("\"kind\": \"mlr\"", "\"kind\": \"knn\"", 1));
        assert!(matches!(parse_bundle::<f64>(&knn), Err(Error::UnknownKind(k)) if k == "knn"));
        // A valid checksum over an inconsistent payload still fails.
        let wrong = resign(&text.replacen("\"kind\": \"mlr\"", "\"kind\": \"ann\"", 1));
        assert!(matches!(parse_bundle::<f64>(&wrong), Err(Error::InvalidBundle(_))));
    }

    #[test]
    fn forest_round_trip_predicts_identically() {
        let (data, scaler, _) = scaled(150);
        let f = forest_fit_encoded(&data, &ForestConfig { n_trees: 500, seed: 3, ..ForestConfig::default() }).unwrap();
        let b = bundle(ModelParams::Rf(f.clone()), &data, &scaler);
        let back: ModelBundle<f64> = parse_bundle(&bundle_bytes(&b).unwrap()).unwrap();
        let ModelParams::Rf(g) = &back.model.params else { panic!() };
        for i in 0..50 {
            assert_eq!(f.votes(data.row(i)).unwrap(), g.votes(data.row(i)).unwrap());
        }
    }

    #[test]
    fn svm_and_ann_round_trip() {
        let (data, scaler, records) = scaled(90);
        let svm = svm_fit_ovr(&data.values, &data.label_indices(), 3, KernelSpec::new(0.1, 1.0).unwrap(), &SmoConfig::default()).unwrap();
        let ann = MlpModel::init(&[data.cols(), 8, 3], 5).unwrap();
        for params in [ModelParams::Svm(svm), ModelParams::Ann(ann)] {
            let b = bundle(params, &data, &scaler);
            let mut buf = Vec::new();
            let n = save_bundle(&b, &mut buf).unwrap();
            assert_eq!(n, buf.len());
            let back: ModelBundle<f64> = load_bundle(buf.as_slice()).unwrap();
            assert_eq!(back, b);
            for r in records.iter().take(10) {
                assert_eq!(b.model.predict(&r.predictors).unwrap(), back.model.predict(&r.predictors).unwrap());
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("m.{BUNDLE_EXTENSION}"));
        let b = mlr_bundle();
        save_bundle_file(&b, &path).unwrap();
        assert_eq!(load_bundle_file::<f64>(&path).unwrap(), b);
        let missing = load_bundle_file::<f64>(&dir.path().join("nope.absmodel")).unwrap_err();
        assert!(missing.to_string().contains("nope.absmodel"));
    }
}
