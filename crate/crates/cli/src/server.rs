//! HTTP service over the model store.
//!
//! Explanation endpoints answer with exactly the bytes `cfx` writes for the
//! same request. Solving runs on the blocking pool, one pipeline per request.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query as UrlQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value as JsonValue};

use cfx_core::api::{self, classify, ErrorClass, ExplainRequest, WeightScheme, WeightsSpec};
use cfx_core::CfxError;

use crate::store::{ModelStore, StoreError};
use crate::{explain, Query};

#[derive(Clone, Debug)]
pub struct Config {
    pub port: u16,
    pub model_dir: PathBuf,
    pub time_limit: Option<Duration>,
}

#[derive(Clone)]
struct AppState {
    store: Arc<ModelStore>,
    time_limit: Option<Duration>,
}

/// An error response: `{"error": {"class": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    class: &'static str,
    message: String,
}

impl From<CfxError> for ApiError {
    fn from(e: CfxError) -> Self {
        let (status, class) = match classify(&e) {
            ErrorClass::Validation => (StatusCode::BAD_REQUEST, "validation"),
            ErrorClass::Infeasible => (StatusCode::UNPROCESSABLE_ENTITY, "infeasible"),
            ErrorClass::CapExceeded => (StatusCode::PAYLOAD_TOO_LARGE, "cap_exceeded"),
        };
        ApiError { status, class, message: e.to_string() }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Invalid(e) => e.into(),
            StoreError::NotFound { .. } => ApiError { status: StatusCode::NOT_FOUND, class: "not_found", message: e.to_string() },
            StoreError::Io(_) => {
                log::error!("{e}");
                ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, class: "internal", message: e.to_string() }
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "class": self.class, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

fn bad_request(message: impl ToString) -> ApiError {
    ApiError { status: StatusCode::BAD_REQUEST, class: "validation", message: message.to_string() }
}

fn json_bytes(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

/// Runs blocking store or solver work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        class: "internal",
        message: e.to_string(),
    })?
}

pub fn router(store: ModelStore, time_limit: Option<Duration>) -> Router {
    let state = AppState { store: Arc::new(store), time_limit };
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/models", post(upload_model).get(list_models))
        .route("/v1/models/{id}", get(get_model))
        .route("/v1/models/{id}/predict", post(predict))
        .route("/v1/models/{id}/counterfactual", post(counterfactual))
        .route("/v1/models/{id}/robustness", post(robustness))
        .route("/v1/models/{id}/prime-implicants", post(prime_implicants))
        .route("/v1/datasets", post(upload_dataset))
        .with_state(state)
}

/// Binds `0.0.0.0:port` and serves until the process ends.
pub fn serve(config: Config) -> std::io::Result<()> {
    let store = ModelStore::open(&config.model_dir)?;
    let app = router(store, config.time_limit);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {addr}, models in {}", config.model_dir.display());
        axum::serve(listener, app).await
    })
}

async fn health() -> Json<JsonValue> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct UploadParams {
    dataset: Option<String>,
}

async fn upload_model(
    State(state): State<AppState>,
    UrlQuery(params): UrlQuery<UploadParams>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let meta = blocking(move || Ok(state.store.put_model(&body, params.dataset.as_deref())?)).await?;
    Ok((StatusCode::CREATED, Json(meta)).into_response())
}

async fn list_models(State(state): State<AppState>) -> Result<Response, ApiError> {
    let models = blocking(move || Ok(state.store.list()?)).await?;
    Ok(Json(json!({ "models": models })).into_response())
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let artifact = blocking(move || Ok(state.store.artifact(&id)?)).await?;
    Ok(json_bytes(StatusCode::OK, artifact.into_bytes()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictBody {
    instance: JsonValue,
}

async fn predict(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let body: PredictBody = serde_json::from_slice(&body).map_err(bad_request)?;
    let out = blocking(move || {
        let (model, _) = state.store.model(&id)?;
        Ok(api::predict(&model, &body.instance)?)
    })
    .await?;
    Ok(Json(out).into_response())
}

async fn run(state: AppState, id: String, query: Query, body: Bytes) -> Result<Response, ApiError> {
    let mut request: ExplainRequest = serde_json::from_slice(&body).map_err(bad_request)?;
    let bytes = blocking(move || {
        let (model, meta) = state.store.model(&id)?;
        // the model's linked dataset stands in when a data-driven scheme
        // is requested without one
        let needs_data = matches!(request.weights, WeightsSpec::Scheme(WeightScheme::Mad | WeightScheme::Std));
        if request.dataset.is_none() && needs_data && query == Query::Counterfactual {
            request.dataset = meta.dataset;
        }
        let csv = match &request.dataset {
            Some(d) => Some(state.store.dataset(d).map_err(|e| match e {
                StoreError::NotFound { .. } => bad_request(e),
                other => other.into(),
            })?),
            None => None,
        };
        Ok(explain(model, query, &request, csv.as_deref(), state.time_limit)?)
    })
    .await?;
    Ok(json_bytes(StatusCode::OK, bytes))
}

async fn counterfactual(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    run(state, id, Query::Counterfactual, body).await
}

async fn robustness(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    run(state, id, Query::Robustness, body).await
}

async fn prime_implicants(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    run(state, id, Query::PrimeImplicants, body).await
}

async fn upload_dataset(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let id = blocking(move || Ok(state.store.put_dataset(&body)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}
