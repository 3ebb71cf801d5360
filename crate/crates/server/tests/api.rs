use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use enrich_core::annotation::AnnotationStore;
use enrich_core::corpus::{Corpus, CorpusRecord, SchemaSet};
use enrich_server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (Router, AppState) {
    let corpus = Corpus::new(
        vec![
            CorpusRecord::new("a", "first comment").with_author("Mary Smith").with_source("CNN"),
            CorpusRecord::new("b", "second comment").with_source("FOX"),
        ],
        SchemaSet::default(),
    );
    let state = AppState::new(AnnotationStore::new(corpus));
    (router(state.clone(), None), state)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_label(item: &str, annotator: &str, attribute: &str, value: &str) -> Request<Body> {
    let body = json!({"item_id": item, "annotator": annotator, "attribute": attribute, "value": value});
    Request::post("/api/labels")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn schema_lists_ten_attributes() {
    let (app, _) = app();
    let (status, body) = call(&app, get("/api/schema")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["attributes"].as_array().unwrap().len(), 10);
}

#[tokio::test]
async fn next_task_hides_author_name() {
    let (app, _) = app();
    let (status, body) = call(&app, get("/api/tasks/next?annotator=ann1")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["id"], "a");
    assert!(body.get("author_name").is_none() || body["author_name"].is_null());
}

#[tokio::test]
async fn labels_accepted_and_rejected() {
    let (app, state) = app();
    let (status, _) = call(&app, post_label("a", "ann1", "Gender", "Female")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state.store.read().current_label("a", "ann1", "Gender"), Some("Female"));

    let (status, body) = call(&app, post_label("a", "ann1", "Against/For", "Maybe")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("Maybe"));
    assert_eq!(state.store.read().events().len(), 1);

    let (status, _) = call(&app, post_label("zz", "ann1", "Gender", "Female")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let bad = Request::post("/api/labels")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let (status, body) = call(&app, bad).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].is_string());
}

#[tokio::test]
async fn completing_items_advances_and_ends_with_204() {
    let (app, state) = app();
    let attrs: Vec<(String, String)> = state
        .store
        .read()
        .items()
        .schemas
        .annotatable()
        .map(|a| (a.name.clone(), a.values[0].clone()))
        .collect();
    for item in ["a", "b"] {
        let (_, body) = call(&app, get("/api/tasks/next?annotator=ann1")).await;
        assert_eq!(body["id"], item);
        for (attr, value) in &attrs {
            let (status, _) = call(&app, post_label(item, "ann1", attr, value)).await;
            assert_eq!(status, StatusCode::OK);
        }
    }
    let (status, _) = call(&app, get("/api/tasks/next?annotator=ann1")).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (_, body) = call(&app, get("/api/progress?annotator=ann1")).await;
    assert_eq!(body, json!({"labeled": 2, "total": 2}));
    let (_, body) = call(&app, get("/api/progress?annotator=ann2")).await;
    assert_eq!(body, json!({"labeled": 0, "total": 2}));
}

#[tokio::test]
async fn agreement_and_adjudication() {
    let (app, _) = app();
    let (status, body) = call(&app, get("/api/agreement?attribute=Civil%2FUncivil")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body["error"].as_str().unwrap().contains("no overlap"));

    for (ann, va, vb) in [("x", "Civil", "Civil"), ("y", "Civil", "Uncivil")] {
        call(&app, post_label("a", ann, "Civil/Uncivil", va)).await;
        call(&app, post_label("b", ann, "Civil/Uncivil", vb)).await;
    }
    let (status, body) = call(&app, get("/api/agreement?attribute=Civil%2FUncivil")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["n_items"], 2);
    assert_eq!(body["percent_agreement"], 0.5);
    assert_eq!(body["kappa"], 0.0);

    let (_, body) = call(&app, get("/api/agreement?attribute=Civil%2FUncivil&a=x&b=y")).await;
    assert_eq!(body["annotators"], json!(["x", "y"]));

    let (status, _) = call(&app, get("/api/agreement?attribute=Height")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, get("/api/adjudication?attribute=Civil%2FUncivil&policy=majority")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["gold"], json!({"a": "Civil"}));
    assert_eq!(body["unresolved"], json!(["b"]));

    let (status, _) = call(&app, get("/api/adjudication?attribute=Civil%2FUncivil&policy=coin-flip")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn health_and_static_ui() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let (_, state) = app();
    let app = router(state, Some(dir.path().to_path_buf()));
    let resp = app.clone().oneshot(get("/index.html")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let (status, body) = call(&app, get("/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, Value::String("ok".into()));
}
