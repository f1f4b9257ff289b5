// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use stylesteer::service::{router, AppState};
use tower::ServiceExt;

fn state() -> Arc<AppState> {
    static STATE: OnceLock<Arc<AppState>> = OnceLock::new();
    STATE
        .get_or_init(|| {
            let (model, tokenizer, store) = common::small_setup();
            Arc::new(AppState::new(model, tokenizer, store).unwrap())
        })
        .clone()
}

fn schema_for(def: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/api-schema.json")).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["$ref"] = json!(format!("#/$defs/{def}"));
    jsonschema::validator_for(&doc).unwrap()
}

fn assert_valid(def: &str, body: &Value) {
    let v = schema_for(def);
    let errors: Vec<String> = v.iter_errors(body).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{def}: {errors:?} in {body}");
}

async fn call(method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value, axum::http::HeaderMap) {
    let mut req = Request::builder().method(method).uri(uri).header("origin", "http://localhost:5173");
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = router(state()).oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value, headers)
}

async fn post(uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, v, _) = call("POST", uri, Some(body.to_string())).await;
    (s, v)
}

#[tokio::test]
async fn health() {
    let (status, body, headers) = call("GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "ok": true }));
    assert_valid("HealthResponse", &body);
    assert_eq!(headers["access-control-allow-origin"], "*");
}

#[tokio::test]
async fn cors_preflight_is_allowed() {
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/v1/generate")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "content-type")
        .body(Body::empty())
        .unwrap();
    let resp = router(state()).oneshot(req).await.unwrap();
    assert!(resp.status().is_success());
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}

#[tokio::test]
async fn generate_is_deterministic_and_valid() {
    let req = json!({ "prompt": "food", "style": "positive", "lambda": 0, "seed": 7 });
    let (s1, a) = post("/v1/generate", req.clone()).await;
    let (s2, b) = post("/v1/generate", req).await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(s2, StatusCode::OK);
    assert_eq!(a, b);
    assert_valid("GenerateResponse", &a);
    let sentiment = a["sentiment"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&sentiment));
    let total: f64 = a["emotions"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(a["applied_layers"], json!([2]));
}

#[tokio::test]
async fn baseline_applies_no_layers() {
    let (s, body) = post(
        "/v1/generate",
        json!({ "prompt": "food", "style": "negative", "lambda": 1.0, "seed": 3, "baseline": true }),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["applied_layers"], json!([]));
    assert_valid("GenerateResponse", &body);
}

#[tokio::test]
async fn unknown_style_is_404_with_inventory() {
    let (s, body) = post("/v1/generate", json!({ "prompt": "food", "style": "nonexistent", "lambda": 1.0 })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body["styles"], json!(["positive", "negative"]));
    assert_valid("ErrorResponse", &body);
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    for body in [
        "{".to_string(),
        json!({ "style": "positive", "lambda": 1 }).to_string(),
        json!({ "prompt": "food", "style": "positive", "lambda": "big" }).to_string(),
        json!({ "prompt": "food", "style": "positive", "lambda": 1, "extra": 1 }).to_string(),
        r#"{"prompt":"food","style":"positive","lambda":1e999}"#.to_string(),
    ] {
        let (s, v, _) = call("POST", "/v1/generate", Some(body.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert_valid("ErrorResponse", &v);
    }
    let (s, _) = post("/v1/generate", json!({ "prompt": "food", "style": "positive", "lambda": 1, "max_new_tokens": 0 })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn styles_reflect_store() {
    let (s, body, _) = call("GET", "/v1/styles", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_valid("StylesResponse", &body);
    let styles = body["styles"].as_array().unwrap();
    assert_eq!(styles.len(), 2);
    assert_eq!(styles[0]["label"], "positive");
    assert_eq!(styles[0]["adjective"], "positive");
    assert_eq!(styles[1]["layers"], json!([0, 1, 2]));
    assert_eq!(styles[1]["methods"], json!(["activation"]));
}

#[tokio::test]
async fn sweep_rows_follow_grid() {
    let grid = json!([0, 0.6, 1.2, 1.9]);
    let (s, body) = post("/v1/sweep", json!({ "prompt": "food", "style": "positive", "grid": grid, "seed": 5 })).await;
    assert_eq!(s, StatusCode::OK);
    assert_valid("SweepResponse", &body);
    let rows = body["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let lambdas: Vec<f64> = rows.iter().map(|r| r["lambda"].as_f64().unwrap()).collect();
    assert_eq!(lambdas, [0.0, 0.6, 1.2, 1.9]);
    assert!(rows.iter().all(|r| r["oversteer"]["flagged"].is_boolean()));

    let (_, single) = post("/v1/generate", json!({ "prompt": "food", "style": "positive", "lambda": 0, "seed": 5 })).await;
    assert_eq!(rows[0]["text"], single["text"]);
}

#[tokio::test]
async fn sweep_grid_limits() {
    let long: Vec<f64> = (0..17).map(|i| i as f64 * 0.1).collect();
    let (s, body) = post("/v1/sweep", json!({ "prompt": "food", "style": "positive", "grid": long })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_valid("ErrorResponse", &body);
    let (s, _) = post("/v1/sweep", json!({ "prompt": "food", "style": "positive", "grid": [] })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let sixteen: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
    let (s, body) = post("/v1/sweep", json!({ "prompt": "food", "style": "positive", "grid": sixteen })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["rows"].as_array().unwrap().len(), 16);
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let req = json!({ "prompt": "movie", "style": "negative", "lambda": 1.5, "seed": 11 });
    let handles: Vec<_> = (0..4).map(|_| tokio::spawn(post("/v1/generate", req.clone()))).collect();
    let mut bodies = Vec::new();
    for h in handles {
        let (s, b) = h.await.unwrap();
        assert_eq!(s, StatusCode::OK);
        bodies.push(b);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}
