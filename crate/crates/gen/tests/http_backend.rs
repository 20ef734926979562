use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde_json::{json, Value};
use synthpipe_core::prompt::PromptMatrix;
use synthpipe_gen::backend::mock_composite;
use synthpipe_gen::quad::encode_png;
use synthpipe_gen::{run_campaign, Backend, BackendError, BackendPolicy, HttpBackend, JobHandle, PollStatus};

#[derive(Default)]
struct Stub {
    jobs: HashMap<String, (String, u32)>,
    next: u32,
    seen_prompts: Vec<String>,
    /// Status served to the next request, then cleared.
    fault: Option<StatusCode>,
}

type Shared = Arc<Mutex<Stub>>;

fn authorized(headers: &HeaderMap) -> bool {
    headers.get("authorization").and_then(|v| v.to_str().ok()) == Some("Bearer sekrit")
}

async fn submit(State(st): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    if !authorized(&headers) {
        return (StatusCode::UNAUTHORIZED, Json(json!({})));
    }
    let mut st = st.lock().unwrap();
    if let Some(code) = st.fault.take() {
        return (code, Json(json!({})));
    }
    let prompt = body["prompt"].as_str().unwrap().to_string();
    st.seen_prompts.push(prompt.clone());
    st.next += 1;
    let id = format!("job{}", st.next);
    st.jobs.insert(id.clone(), (prompt, 0));
    (StatusCode::ACCEPTED, Json(json!({ "id": id })))
}

async fn poll(State(st): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> (StatusCode, Json<Value>) {
    if !authorized(&headers) {
        return (StatusCode::UNAUTHORIZED, Json(json!({})));
    }
    let mut st = st.lock().unwrap();
    if let Some(code) = st.fault.take() {
        return (code, Json(json!({})));
    }
    let Some((prompt, polls)) = st.jobs.get_mut(&id) else {
        return (StatusCode::NOT_FOUND, Json(json!({})));
    };
    *polls += 1;
    if *polls < 2 {
        return (StatusCode::OK, Json(json!({ "status": "pending" })));
    }
    if prompt.contains("FAIL") {
        return (StatusCode::OK, Json(json!({ "status": "error", "message": "nsfw filter" })));
    }
    let png = encode_png(&mock_composite(prompt.len() as u64, 8, 8)).unwrap();
    let b64 = base64::engine::general_purpose::STANDARD.encode(png);
    (StatusCode::OK, Json(json!({ "status": "ready", "image_b64": b64 })))
}

async fn serve() -> (String, Shared) {
    let state = Shared::default();
    let app = Router::new()
        .route("/jobs", post(submit))
        .route("/jobs/{id}", get(poll))
        .with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/"), state)
}

#[tokio::test]
async fn speaks_the_job_protocol() {
    let (url, state) = serve().await;
    let backend = HttpBackend::new(url.clone(), Some("sekrit".into())).unwrap();
    let handle = backend.submit(0, "a photo --ar 1:1").await.unwrap();
    assert_eq!(handle.as_str(), "job1");
    assert!(matches!(backend.poll(&handle).await.unwrap(), PollStatus::Pending));
    match backend.poll(&handle).await.unwrap() {
        PollStatus::Ready(bytes) => assert!(bytes.starts_with(b"\x89PNG")),
        other => panic!("{other:?}"),
    }

    let failing = backend.submit(1, "FAIL").await.unwrap();
    backend.poll(&failing).await.unwrap();
    assert!(matches!(backend.poll(&failing).await.unwrap(), PollStatus::Error(m) if m == "nsfw filter"));

    let missing = backend.poll(&JobHandle("nope".into())).await.unwrap_err();
    assert!(matches!(missing, BackendError::UnknownHandle(_)));

    state.lock().unwrap().fault = Some(StatusCode::SERVICE_UNAVAILABLE);
    let e = backend.poll(&handle).await.unwrap_err();
    assert!(e.is_retryable(), "{e}");
    state.lock().unwrap().fault = Some(StatusCode::BAD_REQUEST);
    let e = backend.submit(2, "x").await.unwrap_err();
    assert!(!e.is_retryable(), "{e}");

    let anonymous = HttpBackend::new(url, None).unwrap();
    assert!(matches!(anonymous.submit(3, "x").await, Err(BackendError::Protocol(_))));
}

#[tokio::test]
async fn closed_port_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let backend = HttpBackend::new(url, None).unwrap();
    let e = backend.submit(0, "x").await.unwrap_err();
    assert!(e.is_retryable(), "{e}");
}

#[tokio::test]
async fn campaign_over_http() {
    let (url, state) = serve().await;
    let prompts = PromptMatrix::default_vocabulary().sample(6, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let policy = BackendPolicy {
        max_in_flight: 2,
        poll_interval: 0.005,
        per_job_timeout: 5.0,
        max_retries: 0,
    };
    let backend = Arc::new(HttpBackend::new(url, Some("sekrit".into())).unwrap());
    let report = run_campaign(&prompts, &policy, backend, dir.path()).await.unwrap();
    assert_eq!((report.completed, report.images_persisted), (6, 24));
    let mut seen = state.lock().unwrap().seen_prompts.clone();
    let mut sent: Vec<_> = prompts.iter().map(|p| p.rendered.clone()).collect();
    seen.sort();
    sent.sort();
    assert_eq!(seen, sent);
}
