//! Read-only JSON inference service over a loaded forest and CounteRGAN.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::constraints::{violations, Violation};
use crate::countergan::CounterGanModel;
use crate::dataset::FeatureMeta;
use crate::error::Error;
use crate::recourse::FeatureChange;
use crate::survival::{ChurnClassifier, SurvivalCurve};

/// Immutable after startup; shared by every request.
pub struct ServiceState {
    pub forest: Arc<ChurnClassifier>,
    pub gan: CounterGanModel,
    pub meta: Vec<FeatureMeta>,
}

impl ServiceState {
    pub fn new(forest: Arc<ChurnClassifier>, gan: CounterGanModel, meta: Vec<FeatureMeta>) -> crate::Result<Self> {
        Error::check_dim(meta.len(), forest.n_features)?;
        Error::check_dim(meta.len(), gan.constraints.len())?;
        Ok(Self { forest, gan, meta })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), detail: detail.into() } }
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", detail)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotApplicable(d) => Self::new(StatusCode::CONFLICT, "recourse_not_applicable", d),
            Error::Dimension { .. } | Error::Config(_) => Self::bad_request(e.to_string()),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturesRequest {
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub features: Vec<f64>,
    #[serde(default)]
    pub edits: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub class: u8,
    pub score: f64,
    pub median_lifetime_days: f64,
    /// The curve never fell to 0.5; the median is the last observed time.
    pub median_truncated: bool,
    pub survival_curve: SurvivalCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseResponse {
    pub delta: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub pre_class: u8,
    pub post_class: u8,
    pub cost_sq: f64,
    pub per_feature_changes: Vec<FeatureChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub class: u8,
    pub score: f64,
    pub median_lifetime_days: f64,
    pub median_truncated: bool,
    pub features: Vec<f64>,
    pub violated_constraints: Vec<Violation>,
}

/// Rejects wrong lengths, non-finite values and values outside bounds,
/// naming the first offending feature.
fn check_features(meta: &[FeatureMeta], x: &[f64]) -> Result<(), ApiError> {
    if x.len() != meta.len() {
        return Err(ApiError::bad_request(format!("expected {} features, got {}", meta.len(), x.len())));
    }
    for (i, (v, m)) in x.iter().zip(meta).enumerate() {
        if !v.is_finite() || !m.contains(*v) {
            return Err(ApiError::bad_request(format!(
                "feature {i} ({}) = {v} outside [{}, {}]",
                m.name, m.lower_bound, m.upper_bound
            )));
        }
    }
    Ok(())
}

fn predict_inner(state: &ServiceState, x: &[f64]) -> Result<PredictResponse, ApiError> {
    let curve = state.forest.predict_curve(x)?;
    let median = curve.median();
    Ok(PredictResponse {
        class: state.forest.classify(x)?,
        score: state.forest.class_score(x)?,
        median_lifetime_days: median.days,
        median_truncated: median.truncated,
        survival_curve: curve,
    })
}

async fn features(State(state): State<Arc<ServiceState>>) -> Json<Vec<FeatureMeta>> {
    Json(state.meta.clone())
}

async fn predict(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<FeaturesRequest>, JsonRejection>,
) -> ApiResult<PredictResponse> {
    let Json(req) = body?;
    check_features(&state.meta, &req.features)?;
    Ok(Json(predict_inner(&state, &req.features)?))
}

async fn recourse(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<FeaturesRequest>, JsonRejection>,
) -> ApiResult<RecourseResponse> {
    let Json(req) = body?;
    check_features(&state.meta, &req.features)?;
    let action = state.gan.generate_recourse("request", &req.features)?;
    let per_feature_changes = action.changes(&req.features, &state.meta);
    Ok(Json(RecourseResponse {
        delta: action.delta,
        counterfactual: action.counterfactual,
        pre_class: action.pre_class,
        post_class: action.post_class,
        cost_sq: action.cost_sq,
        per_feature_changes,
    }))
}

async fn whatif(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<WhatIfRequest>, JsonRejection>,
) -> ApiResult<WhatIfResponse> {
    let Json(req) = body?;
    check_features(&state.meta, &req.features)?;
    let mut edited = req.features.clone();
    for (name, value) in &req.edits {
        let i = state
            .meta
            .iter()
            .position(|m| &m.name == name)
            .ok_or_else(|| ApiError::bad_request(format!("unknown feature '{name}'")))?;
        if !value.is_finite() {
            return Err(ApiError::bad_request(format!("edit for '{name}' is not finite")));
        }
        edited[i] = *value;
    }
    let violated_constraints = violations(&req.features, &edited, &state.meta)?;
    let p = predict_inner(&state, &edited)?;
    Ok(Json(WhatIfResponse {
        class: p.class,
        score: p.score,
        median_lifetime_days: p.median_lifetime_days,
        median_truncated: p.median_truncated,
        features: edited,
        violated_constraints,
    }))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/features", get(features))
        .route("/predict", post(predict))
        .route("/recourse", post(recourse))
        .route("/whatif", post(whatif))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(state: ServiceState, port: u16) -> crate::Result<()> {
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
