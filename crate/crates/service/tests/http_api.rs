use std::sync::Arc;

use absenteeism_core::experiment::{train_bundle, ExperimentConfig, TrainTarget};
use absenteeism_core::numerics::RngStream;
use absenteeism_core::persistence::bundle_bytes;
use absenteeism_core::{synthetic, Attribute, ModelKind};
use absenteeism_service::{router, PredictionResponse, PredictionService, SchemaDocument};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Map, Value};
use tower::ServiceExt;

fn trained(kind: ModelKind) -> Arc<PredictionService> {
    let records = synthetic::generate(400, 17);
    let mut cfg = ExperimentConfig::default();
    cfg.rf.n_trees = 40;
    cfg.ann.hidden_layers = vec![16, 8];
    cfg.ann.epochs = 20;
    let out = train_bundle(&records, &cfg, TrainTarget::Kind(kind)).unwrap();
    Arc::new(PredictionService::from_bundle_bytes(&bundle_bytes(&out.bundle).unwrap()).unwrap())
}

async fn call(app: axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

/// Random candidate drawn inside the schema's categories and ranges.
fn random_candidate(schema: &SchemaDocument, rng: &mut RngStream) -> Value {
    let mut m = Map::new();
    for a in &schema.attributes {
        let v = match &a.categories {
            Some(c) => json!(c[rng.next_below(c.len())]),
            None => {
                let (lo, hi) = (a.min.unwrap(), a.max.unwrap());
                let x = lo + (hi - lo) * rng.next_f64();
                if a.integer {
                    json!(x.round() as u64)
                } else {
                    json!(x)
                }
            }
        };
        m.insert(a.name.clone(), v);
    }
    Value::Object(m)
}

#[tokio::test]
async fn health_reflects_model_state() {
    let (s, v) = call(router(Arc::new(PredictionService::empty()), None), "GET", "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "not-ready");
    let (s, v) = call(router(Arc::new(PredictionService::empty()), None), "POST", "/api/predict", Some(json!({}))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["code"], "model_unavailable");
    assert!(v["fields"].as_array().unwrap().is_empty());

    let (_, v) = call(router(trained(ModelKind::Mlr), None), "GET", "/api/health", None).await;
    assert_eq!(v["status"], "ready");
}

#[tokio::test]
async fn schema_and_model_info() {
    let svc = trained(ModelKind::Mlr);
    let (s, v) = call(router(svc.clone(), None), "GET", "/api/schema", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["attributes"].as_array().unwrap().len(), 13);
    let (s, v) = call(router(svc.clone(), None), "GET", "/api/model-info", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["kind"], "mlr");
    assert_eq!(v["digest"].as_str().unwrap().len(), 64);
    assert!(v["metrics"]["f1_weighted"].is_number());
}

#[tokio::test]
async fn field_faults_are_422() {
    let svc = trained(ModelKind::Mlr);
    let schema = svc.schema().unwrap();
    let mut body = random_candidate(&schema, &mut RngStream::new(1));
    body.as_object_mut().unwrap().remove("age");
    let (s, v) = call(router(svc.clone(), None), "POST", "/api/predict", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["fields"], json!(["age"]));
    assert!(v["message"].as_str().unwrap().contains("age"));

    let mut body = random_candidate(&schema, &mut RngStream::new(2));
    body["reason_for_absence"] = json!(200);
    let (s, v) = call(router(svc.clone(), None), "POST", "/api/predict", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "unknown_category");
    assert_eq!(v["fields"], json!(["reason_for_absence"]));

    let req = Request::builder().method("POST").uri("/api/predict").body(Body::from("nope")).unwrap();
    let resp = router(svc, None).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_api_path_is_a_fault() {
    let (s, v) = call(router(trained(ModelKind::Mlr), None), "GET", "/api/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
}

#[tokio::test]
async fn static_files_are_served_from_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>form</h1>").unwrap();
    let app = router(trained(ModelKind::Mlr), Some(dir.path().to_path_buf()));
    let resp = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<h1>form</h1>");
    let (s, _) = call(app, "GET", "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn service_matches_library_on_random_inputs() {
    for kind in ModelKind::ALL {
        let svc = trained(kind);
        let schema = svc.schema().unwrap();
        let model = &svc.bundle().unwrap().model;
        let mut rng = RngStream::new(99);
        let app = router(svc.clone(), None);
        let n = if kind == ModelKind::Mlr { 1000 } else { 250 };
        for _ in 0..n {
            let body = random_candidate(&schema, &mut rng);
            let (s, v) = call(app.clone(), "POST", "/api/predict", Some(body.clone())).await;
            assert_eq!(s, StatusCode::OK, "{v}");
            let resp: PredictionResponse = serde_json::from_value(v).unwrap();
            let predictors = serde_json::from_value(body).unwrap();
            let direct = model.predict(&predictors).unwrap();
            assert_eq!(resp.class, direct.class);
            assert_eq!(resp.scores, direct.scores);
            assert_eq!(resp.probabilities, direct.probabilities);
        }
    }
    assert_eq!(Attribute::ALL.len(), 13);
}
