use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use recallfeed::engine::{Engine, RetrievalSettings};
use recallfeed::service::SessionManager;
use recallfeed::synthetic::{SyntheticConfig, SyntheticCorpus};
use recallfeed_cli::server::router;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    let syn = SyntheticCorpus::generate(&SyntheticConfig { topics: 3, docs_per_topic: 40, ..Default::default() }).unwrap();
    let labels: HashMap<String, BTreeSet<String>> = syn.corpus.documents().iter().map(|d| (d.doc_id.clone(), d.topics.clone())).collect();
    let snippets: HashMap<String, String> = syn.corpus.documents().iter().map(|d| (format!("{}#0", d.doc_id), d.text())).collect();
    let engine = Engine::new(syn.vector_store().unwrap());
    let manager = SessionManager::new(Arc::new(engine), RetrievalSettings::default()).unwrap().with_labels(labels).with_snippets(snippets);
    router(Arc::new(manager))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn doc_ids(view: &Value) -> Vec<String> {
    view["batch"].as_array().unwrap().iter().map(|b| b["doc_id"].as_str().unwrap().to_string()).collect()
}

async fn create(app: &Router) -> Value {
    let body = json!({ "query_doc_id": "syn00-0003", "strategy": { "kind": "sum", "amplify": true } }).to_string();
    let (status, view) = call(app, Method::POST, "/api/sessions", Some(&body)).await;
    assert_eq!(status, StatusCode::CREATED);
    view
}

#[tokio::test]
async fn review_round_trip() {
    let app = app();
    let view = create(&app).await;
    let id = view["session_id"].as_str().unwrap();
    assert_eq!(view["batch"].as_array().unwrap().len(), 10);
    assert!(view["batch"][0]["snippet"].as_str().unwrap().len() > 10);
    assert_eq!(view["progress"]["relevant"], 39);
    assert_eq!(view["strategy"]["amplify"], true);

    let (status, fetched) = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched, view);

    let first = doc_ids(&view);
    let (accepted, declined): (Vec<String>, Vec<String>) = first.iter().cloned().partition(|d| d.starts_with("syn00"));
    let body = json!({ "accepted": accepted, "declined": declined }).to_string();
    let (status, next) = call(&app, Method::POST, &format!("/api/sessions/{id}/feedback"), Some(&body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(next["iteration"], 1);
    assert_eq!(next["progress"]["reviewed"], 10);
    assert_eq!(next["progress"]["accepted"], accepted.len());
    assert!(doc_ids(&next).iter().all(|d| !first.contains(d)));

    let (status, trace) = call(&app, Method::GET, &format!("/api/sessions/{id}/trace"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trace.as_array().unwrap().len(), 1);
    assert_eq!(trace[0]["batch"], json!(first));

    let (status, body) = call(&app, Method::DELETE, &format!("/api/sessions/{id}"), None).await;
    assert_eq!((status, body), (StatusCode::NO_CONTENT, Value::Null));
    let (status, body) = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_session");
}

#[tokio::test]
async fn errors_carry_code_and_message() {
    let app = app();
    let view = create(&app).await;
    let id = view["session_id"].as_str().unwrap();
    let batch = doc_ids(&view);
    let feedback = format!("/api/sessions/{id}/feedback");

    let expect = |status: StatusCode, code: &'static str| {
        move |(s, body): (StatusCode, Value)| {
            assert_eq!(s, status, "{body}");
            assert_eq!(body["code"], code);
            assert!(!body["message"].as_str().unwrap().is_empty());
        }
    };

    // partial coverage, outside ids, overlap
    let partial = json!({ "accepted": &batch[..3], "declined": [] }).to_string();
    expect(StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback")(call(&app, Method::POST, &feedback, Some(&partial)).await);
    let mut outside = batch.clone();
    outside[0] = "syn02-0039".into();
    let body = json!({ "accepted": outside, "declined": [] }).to_string();
    expect(StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback")(call(&app, Method::POST, &feedback, Some(&body)).await);
    let body = json!({ "accepted": batch, "declined": [&batch[0]] }).to_string();
    expect(StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback")(call(&app, Method::POST, &feedback, Some(&body)).await);

    // bodies: malformed JSON is 400, well-formed but wrong shape is 422
    expect(StatusCode::BAD_REQUEST, "malformed_json")(call(&app, Method::POST, &feedback, Some("{\"accepted\": [")).await);
    expect(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request")(call(&app, Method::POST, &feedback, Some("{\"accepted\": [], \"rejected\": []}")).await);
    let bad_strategy = json!({ "query_doc_id": "syn00-0003", "strategy": { "kind": "magic" } }).to_string();
    expect(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request")(call(&app, Method::POST, "/api/sessions", Some(&bad_strategy)).await);
    let both = json!({ "query_doc_id": "syn00-0003", "query_text": "x", "strategy": { "kind": "sum" } }).to_string();
    expect(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request")(call(&app, Method::POST, "/api/sessions", Some(&both)).await);
    let unknown = json!({ "query_doc_id": "nope", "strategy": { "kind": "sum" } }).to_string();
    expect(StatusCode::NOT_FOUND, "unknown_document")(call(&app, Method::POST, "/api/sessions", Some(&unknown)).await);

    // the failed submissions left the batch open; resolve it, then replay it
    let good = json!({ "accepted": batch, "declined": [] }).to_string();
    assert_eq!(call(&app, Method::POST, &feedback, Some(&good)).await.0, StatusCode::OK);
    expect(StatusCode::CONFLICT, "stale_batch")(call(&app, Method::POST, &feedback, Some(&good)).await);
    let stale = json!({ "accepted": [], "declined": [], "iteration": 0 }).to_string();
    expect(StatusCode::CONFLICT, "stale_batch")(call(&app, Method::POST, &feedback, Some(&stale)).await);

    expect(StatusCode::NOT_FOUND, "unknown_session")(call(&app, Method::POST, "/api/sessions/nope/feedback", Some(&good)).await);
    expect(StatusCode::NOT_FOUND, "unknown_session")(call(&app, Method::GET, "/api/sessions/nope/trace", None).await);
    expect(StatusCode::NOT_FOUND, "unknown_session")(call(&app, Method::DELETE, "/api/sessions/nope", None).await);
}

#[tokio::test]
async fn sessions_are_isolated() {
    let app = app();
    let a = create(&app).await;
    let b = create(&app).await;
    assert_ne!(a["session_id"], b["session_id"]);
    assert_eq!(doc_ids(&a), doc_ids(&b));
    let body = json!({ "accepted": doc_ids(&a), "declined": [] }).to_string();
    let uri = format!("/api/sessions/{}/feedback", a["session_id"].as_str().unwrap());
    assert_eq!(call(&app, Method::POST, &uri, Some(&body)).await.0, StatusCode::OK);
    let (_, b_now) = call(&app, Method::GET, &format!("/api/sessions/{}", b["session_id"].as_str().unwrap()), None).await;
    assert_eq!(b_now, b);
}
