//! HTTP/JSON front end over an [`AnnotationStore`].

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use enrich_core::annotation::{AdjudicationPolicy, AnnotationStore, LabelSubmission};
use enrich_core::Error;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub type SharedStore = Arc<RwLock<AnnotationStore>>;

#[derive(Clone)]
pub struct AppState {
    pub store: SharedStore,
}

impl AppState {
    pub fn new(store: AnnotationStore) -> Self {
        AppState {
            store: Arc::new(RwLock::new(store)),
        }
    }
}

/// JSON `{"error": reason}` with a status chosen by error kind.
pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::UnknownAttribute(_) => StatusCode::NOT_FOUND,
            Error::NoOverlap(..) => StatusCode::CONFLICT,
            Error::Config(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

#[derive(Deserialize)]
struct AgreementQuery {
    attribute: String,
    a: Option<String>,
    b: Option<String>,
}

#[derive(Deserialize)]
struct AdjudicationQuery {
    attribute: String,
    policy: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct Ack {
    pub status: String,
}

async fn health() -> &'static str {
    "ok"
}

async fn schema(State(st): State<AppState>) -> Json<serde_json::Value> {
    let store = st.store.read();
    let items = store.items();
    Json(json!({
        "attributes": items.schemas.attributes,
        "provenance": items.provenance,
    }))
}

async fn next_task(State(st): State<AppState>, Query(q): Query<AnnotatorQuery>) -> Response {
    let store = st.store.read();
    match store.next_task(&q.annotator) {
        Some(record) => {
            let mut record = record.clone();
            record.author_name = None;
            Json(record).into_response()
        }
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit_label(
    State(st): State<AppState>,
    body: Result<Json<LabelSubmission>, JsonRejection>,
) -> Result<Json<Ack>, ApiError> {
    let Json(sub) = body.map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    st.store.write().submit(sub)?;
    Ok(Json(Ack { status: "ok".into() }))
}

async fn agreement(
    State(st): State<AppState>,
    Query(q): Query<AgreementQuery>,
) -> Result<Json<enrich_core::annotation::AgreementReport>, ApiError> {
    let store = st.store.read();
    let report = match (&q.a, &q.b) {
        (Some(a), Some(b)) => store.pair_report(&q.attribute, (a, b))?,
        (None, None) => store.agreement(&q.attribute)?,
        _ => return Err(ApiError(StatusCode::BAD_REQUEST, "give both a and b or neither".into())),
    };
    Ok(Json(report))
}

async fn progress(
    State(st): State<AppState>,
    Query(q): Query<AnnotatorQuery>,
) -> Json<enrich_core::annotation::Progress> {
    Json(st.store.read().progress(&q.annotator))
}

async fn adjudication(
    State(st): State<AppState>,
    Query(q): Query<AdjudicationQuery>,
) -> Result<Json<enrich_core::annotation::Adjudication>, ApiError> {
    let policy: AdjudicationPolicy = q.policy.as_deref().unwrap_or("majority").parse()?;
    Ok(Json(st.store.read().adjudicate(&q.attribute, policy)?))
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/api/schema", get(schema))
        .route("/api/tasks/next", get(next_task))
        .route("/api/labels", post(submit_label))
        .route("/api/agreement", get(agreement))
        .route("/api/progress", get(progress))
        .route("/api/adjudication", get(adjudication))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    ui_dir: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("annotation service listening on http://{addr}");
    }
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(shutdown)
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_statuses() {
        let s = |e: Error| ApiError::from(e).0;
        assert_eq!(s(Error::Rejected("x".into())), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(s(Error::NoOverlap("a".into(), "b".into())), StatusCode::CONFLICT);
        assert_eq!(s(Error::UnknownAttribute("x".into())), StatusCode::NOT_FOUND);
    }
}
