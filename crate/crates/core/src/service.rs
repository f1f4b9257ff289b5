// SPDX-License-Identifier: MIT OR Apache-2.0

//! HTTP API over a loaded model and style store.
//!
//! The state is built once and only read afterwards. Generation runs on the
//! blocking pool so slow decodes do not stall the listener.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::cli::load_model;
use crate::corpus::Tokenizer;
use crate::error::{Error, Result};
use crate::evaluate::{EmotionLexicon, SentimentLexicon};
use crate::generate::{prompt_baseline_generate, steered_generate, GenerationResult, OversteerReport, Sampling, SteerRequest};
use crate::model::Model;
use crate::stylevec::{Method, StyleStore};

/// Longest grid accepted by `/v1/sweep`.
pub const MAX_SWEEP_GRID: usize = 16;
/// Upper bound on `max_new_tokens` per request.
pub const MAX_NEW_TOKENS: usize = 256;

pub struct AppState {
    pub model: Model,
    pub tokenizer: Tokenizer,
    pub store: StyleStore,
    sentiment: SentimentLexicon,
    emotions: EmotionLexicon,
}

impl AppState {
    pub fn new(model: Model, tokenizer: Tokenizer, store: StyleStore) -> Result<Self> {
        if store.d_model != 0 && store.d_model != model.config().d_model {
            return Err(Error::Dimension {
                expected: model.config().d_model,
                got: store.d_model,
            });
        }
        Ok(Self {
            model,
            tokenizer,
            store,
            sentiment: SentimentLexicon::bundled()?,
            emotions: EmotionLexicon::bundled()?,
        })
    }

    pub fn load(model: &Path, store: &Path) -> Result<Self> {
        let (model, tokenizer) = load_model(model)?;
        Self::new(model, tokenizer, StyleStore::load(store)?)
    }
}

fn default_method() -> Method {
    Method::Activation
}

fn default_max_new_tokens() -> usize {
    12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiGenerateRequest {
    pub prompt: String,
    pub style: String,
    pub lambda: f64,
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiGenerateResponse {
    pub text: String,
    pub oversteer: OversteerReport,
    pub sentiment: f64,
    pub emotions: BTreeMap<String, f64>,
    pub applied_layers: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSweepRequest {
    pub prompt: String,
    pub style: String,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSweepRow {
    pub lambda: f64,
    pub text: String,
    pub sentiment: f64,
    pub oversteer: OversteerReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSweepResponse {
    pub rows: Vec<ApiSweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiStyle {
    pub label: String,
    pub adjective: String,
    pub methods: Vec<Method>,
    pub layers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiStyles {
    pub styles: Vec<ApiStyle>,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    UnknownStyle { style: String, styles: Vec<String> },
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            Self::BadRequest(msg) => (StatusCode::BAD_REQUEST, Json(json!({ "error": msg }))).into_response(),
            Self::UnknownStyle { style, styles } => (
                StatusCode::NOT_FOUND,
                Json(json!({ "error": format!("unknown style '{style}'"), "styles": styles })),
            )
                .into_response(),
            Self::Internal(msg) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": msg }))).into_response(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Self::Internal(e.to_string()),
            e => Self::BadRequest(e.to_string()),
        }
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

fn check_style(state: &AppState, style: &str) -> std::result::Result<(), ApiError> {
    if state.store.has_style(style) {
        Ok(())
    } else {
        Err(ApiError::UnknownStyle {
            style: style.to_string(),
            styles: state.store.labels().into_iter().map(String::from).collect(),
        })
    }
}

fn check_max_new_tokens(n: usize) -> std::result::Result<(), ApiError> {
    if n == 0 || n > MAX_NEW_TOKENS {
        return Err(ApiError::BadRequest(format!("max_new_tokens must be in 1..={MAX_NEW_TOKENS}")));
    }
    Ok(())
}

fn steer_request(prompt: &str, style: &str, lambda: f64, layers: Option<Vec<usize>>, method: Method, max_new_tokens: usize, seed: u64) -> SteerRequest {
    SteerRequest {
        layers,
        method,
        sampling: Sampling::default(),
        max_new_tokens,
        ..SteerRequest::new(prompt, style, lambda, seed)
    }
}

/// Runs one `/v1/generate` request against `state`.
pub fn handle_generate(state: &AppState, req: &ApiGenerateRequest) -> std::result::Result<ApiGenerateResponse, ApiError> {
    if !req.lambda.is_finite() {
        return Err(ApiError::BadRequest("lambda must be finite".into()));
    }
    check_max_new_tokens(req.max_new_tokens)?;
    check_style(state, &req.style)?;
    let result = if req.baseline {
        prompt_baseline_generate(
            &state.model,
            &state.tokenizer,
            &state.store,
            &req.prompt,
            &req.style,
            Sampling::default(),
            req.max_new_tokens,
            req.seed,
        )?
    } else {
        let sreq = steer_request(&req.prompt, &req.style, req.lambda, req.layers.clone(), req.method, req.max_new_tokens, req.seed);
        steered_generate(&state.model, &state.tokenizer, &state.store, &sreq)?
    };
    Ok(respond(state, result))
}

fn respond(state: &AppState, result: GenerationResult) -> ApiGenerateResponse {
    ApiGenerateResponse {
        sentiment: state.sentiment.score(&result.text),
        emotions: state.emotions.scores(&result.text),
        applied_layers: result.injections.iter().map(|i| i.layer).collect(),
        oversteer: result.oversteer,
        text: result.text,
    }
}

/// Runs one `/v1/sweep` request: one generation per lambda, same seed.
pub fn handle_sweep(state: &AppState, req: &ApiSweepRequest) -> std::result::Result<ApiSweepResponse, ApiError> {
    if req.grid.is_empty() || req.grid.len() > MAX_SWEEP_GRID {
        return Err(ApiError::BadRequest(format!("grid must have 1 to {MAX_SWEEP_GRID} values")));
    }
    if req.grid.iter().any(|l| !l.is_finite()) {
        return Err(ApiError::BadRequest("grid values must be finite".into()));
    }
    check_max_new_tokens(req.max_new_tokens)?;
    check_style(state, &req.style)?;
    let mut rows = Vec::with_capacity(req.grid.len());
    for &lambda in &req.grid {
        let sreq = steer_request(&req.prompt, &req.style, lambda, req.layers.clone(), req.method, req.max_new_tokens, req.seed);
        let r = steered_generate(&state.model, &state.tokenizer, &state.store, &sreq)?;
        rows.push(ApiSweepRow {
            lambda,
            sentiment: state.sentiment.score(&r.text),
            oversteer: r.oversteer,
            text: r.text,
        });
    }
    Ok(ApiSweepResponse { rows })
}

pub fn styles(state: &AppState) -> ApiStyles {
    ApiStyles {
        styles: state
            .store
            .styles
            .iter()
            .map(|s| ApiStyle {
                label: s.label.clone(),
                adjective: s.adjective.clone(),
                methods: state.store.methods(&s.label),
                layers: state.store.layers(&s.label, None),
            })
            .collect(),
    }
}

async fn blocking<T, F>(state: Arc<AppState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> std::result::Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map(Json)
}

async fn generate_route(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ApiGenerateResponse> {
    let req: ApiGenerateRequest = parse_body(&body)?;
    blocking(state, move |s| handle_generate(s, &req)).await
}

async fn sweep_route(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ApiSweepResponse> {
    let req: ApiSweepRequest = parse_body(&body)?;
    blocking(state, move |s| handle_sweep(s, &req)).await
}

async fn styles_route(State(state): State<Arc<AppState>>) -> Json<ApiStyles> {
    Json(styles(&state))
}

async fn health_route() -> Json<serde_json::Value> {
    Json(json!({ "ok": true }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/generate", post(generate_route))
        .route("/v1/sweep", post(sweep_route))
        .route("/v1/styles", get(styles_route))
        .route("/v1/health", get(health_route))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Listens on `addr` until interrupted.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
