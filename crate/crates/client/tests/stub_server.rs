use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Multipart, Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use metaphor_client::{
    submit_finetune, wait_for_finetune, ChatClient, ChatRequest, ClientError, FineTuneJobSpec, Mode,
    ProviderConfig, TranscriptStore,
};
use metaphor_core::promptgen::{Message, Role};
use serde_json::{json, Value};

#[derive(Default)]
struct Stub {
    hits: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    /// Status codes to return before succeeding.
    failures: Mutex<Vec<u16>>,
    bodies: Mutex<Vec<Value>>,
    auth: Mutex<Vec<Option<String>>>,
    delay_ms: u64,
    polls: AtomicUsize,
}

fn completion(content: &str) -> Value {
    json!({
        "id": "chatcmpl-1",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 7, "total_tokens": 18}
    })
}

async fn chat(State(s): State<Arc<Stub>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    s.hits.fetch_add(1, Ordering::SeqCst);
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.max_in_flight.fetch_max(now, Ordering::SeqCst);
    if s.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(s.delay_ms)).await;
    }
    s.in_flight.fetch_sub(1, Ordering::SeqCst);
    s.auth
        .lock()
        .unwrap()
        .push(headers.get("authorization").map(|v| v.to_str().unwrap().to_string()));
    let next = {
        let mut f = s.failures.lock().unwrap();
        if f.is_empty() { None } else { Some(f.remove(0)) }
    };
    let last_user = body["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string();
    s.bodies.lock().unwrap().push(body);
    match next {
        Some(code) => {
            let status = StatusCode::from_u16(code).unwrap();
            let mut resp = (status, Json(json!({"error": {"message": format!("stub failure {code}")}}))).into_response();
            if code == 429 {
                resp.headers_mut().insert("retry-after", "0".parse().unwrap());
            }
            resp
        }
        None => Json(completion(&format!("echo: {last_user}"))).into_response(),
    }
}

async fn upload(State(s): State<Arc<Stub>>, mut form: Multipart) -> Response {
    s.hits.fetch_add(1, Ordering::SeqCst);
    while let Some(field) = form.next_field().await.unwrap() {
        if field.name() == Some("file") {
            let data = field.text().await.unwrap();
            for (i, line) in data.lines().enumerate() {
                let ok = serde_json::from_str::<Value>(line).is_ok_and(|v| v["messages"].is_array());
                if !ok {
                    let msg = format!("Invalid file format: line {} is not a valid training example", i + 1);
                    return (StatusCode::BAD_REQUEST, Json(json!({"error": {"message": msg}}))).into_response();
                }
            }
        }
    }
    Json(json!({"id": "file-abc", "object": "file"})).into_response()
}

async fn create_job(State(s): State<Arc<Stub>>, Json(body): Json<Value>) -> Json<Value> {
    s.hits.fetch_add(1, Ordering::SeqCst);
    assert_eq!(body["training_file"], "file-abc");
    Json(json!({"id": "ftjob-1", "status": "queued", "model": body["model"]}))
}

async fn job_status(State(s): State<Arc<Stub>>, Path(id): Path<String>) -> Json<Value> {
    s.hits.fetch_add(1, Ordering::SeqCst);
    let n = s.polls.fetch_add(1, Ordering::SeqCst);
    if n < 2 {
        Json(json!({"id": id, "status": "running", "fine_tuned_model": null}))
    } else {
        Json(json!({"id": id, "status": "succeeded", "fine_tuned_model": "ft:base:stub:1"}))
    }
}

async fn serve(stub: Arc<Stub>) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/files", post(upload))
        .route("/v1/fine_tuning/jobs", post(create_job))
        .route("/v1/fine_tuning/jobs/{id}", get(job_status))
        .with_state(stub);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1")
}

fn config(base: &str) -> ProviderConfig {
    let mut c = ProviderConfig::new(base, "stub-model");
    c.initial_backoff_ms = 10;
    c.max_backoff_ms = 50;
    c.max_retries = 3;
    c.timeout_secs = 10;
    c
}

fn request(text: &str, repetition: u32) -> ChatRequest {
    ChatRequest {
        messages: vec![Message::new(Role::System, "sys"), Message::new(Role::User, text)],
        model_name: "stub-model".into(),
        temperature: None,
        repetition,
    }
}

#[tokio::test]
async fn rate_limit_then_success_takes_two_attempts() {
    let stub = Arc::new(Stub {
        failures: Mutex::new(vec![429]),
        ..Default::default()
    });
    let base = serve(stub.clone()).await;
    let client = ChatClient::new(config(&base), Mode::Live, None).unwrap();
    let r = client.complete(&request("hi", 0)).await.unwrap();
    assert_eq!(r.attempts, 2);
    assert_eq!(r.content, "echo: hi");
    assert_eq!(r.finish_reason, "stop");
    assert_eq!((r.usage.prompt_tokens, r.usage.completion_tokens), (11, 7));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn transient_errors_exhaust_retries() {
    let stub = Arc::new(Stub {
        failures: Mutex::new(vec![503, 500, 408, 502, 503]),
        ..Default::default()
    });
    let base = serve(stub.clone()).await;
    let client = ChatClient::new(config(&base), Mode::Live, None).unwrap();
    let err = client.complete(&request("hi", 0)).await.unwrap_err();
    match err {
        ClientError::RetriesExhausted { attempts, last_error } => {
            assert_eq!(attempts, 4);
            assert!(last_error.contains("502"), "{last_error}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(stub.hits.load(Ordering::SeqCst), 4);
}

#[tokio::test]
async fn auth_and_validation_errors_are_not_retried() {
    let stub = Arc::new(Stub {
        failures: Mutex::new(vec![401, 400]),
        ..Default::default()
    });
    let base = serve(stub.clone()).await;
    let client = ChatClient::new(config(&base), Mode::Live, None).unwrap();
    assert!(matches!(
        client.complete(&request("a", 0)).await,
        Err(ClientError::AuthError { status: 401, .. })
    ));
    match client.complete(&request("b", 0)).await {
        Err(ClientError::ProviderRejected { status, message }) => {
            assert_eq!(status, 400);
            assert_eq!(message, "stub failure 400");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn in_flight_requests_never_exceed_max_parallel() {
    let stub = Arc::new(Stub {
        delay_ms: 40,
        ..Default::default()
    });
    let base = serve(stub.clone()).await;
    let mut cfg = config(&base);
    cfg.max_parallel = 3;
    let client = ChatClient::new(cfg, Mode::Live, None).unwrap();
    let tasks: Vec<_> = (0..20)
        .map(|i| {
            let c = client.clone();
            tokio::spawn(async move { c.complete(&request(&format!("q{i}"), 0)).await.unwrap() })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    let max = stub.max_in_flight.load(Ordering::SeqCst);
    assert!(max <= 3, "saw {max} concurrent requests");
    assert!(max >= 2, "requests were not concurrent at all");
    assert_eq!(stub.hits.load(Ordering::SeqCst), 20);
}

#[tokio::test]
async fn temperature_and_auth_header_only_when_configured() {
    let stub = Arc::new(Stub::default());
    let base = serve(stub.clone()).await;
    let mut cfg = config(&base);
    cfg.api_key_ref = "METAPHOR_STUB_TEST_KEY".into();
    // SAFETY: set before any other thread in this test reads the variable
    unsafe { std::env::set_var("METAPHOR_STUB_TEST_KEY", "sk-test") };
    let client = ChatClient::new(cfg, Mode::Live, None).unwrap();
    client.complete(&request("a", 0)).await.unwrap();
    let mut with_temp = request("b", 0);
    with_temp.temperature = Some(0.2);
    client.complete(&with_temp).await.unwrap();
    let bodies = stub.bodies.lock().unwrap();
    assert!(bodies[0].get("temperature").is_none());
    assert_eq!(bodies[1]["temperature"], 0.2);
    assert_eq!(bodies[0]["model"], "stub-model");
    assert_eq!(stub.auth.lock().unwrap()[0].as_deref(), Some("Bearer sk-test"));
}

#[tokio::test]
async fn record_then_replay_without_network() {
    let stub = Arc::new(Stub::default());
    let base = serve(stub.clone()).await;
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(TranscriptStore::open(dir.path()).unwrap());
    let recorder = ChatClient::new(config(&base), Mode::Record, Some(store.clone())).unwrap();
    let first = recorder.complete(&request("x", 0)).await.unwrap();
    let again = recorder.complete(&request("x", 0)).await.unwrap();
    assert_eq!(first, again);
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1, "recorded request was re-sent");
    recorder.complete(&request("x", 1)).await.unwrap();
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);

    // replay against an address nothing listens on
    let store = Arc::new(TranscriptStore::open(dir.path()).unwrap());
    let replayer = ChatClient::new(config("http://127.0.0.1:9/v1"), Mode::Replay, Some(store)).unwrap();
    assert_eq!(replayer.complete(&request("x", 0)).await.unwrap(), first);
    assert!(matches!(
        replayer.complete(&request("never sent", 0)).await,
        Err(ClientError::ReplayMiss { .. })
    ));
}

fn job_spec(jsonl: &str, reasoning: bool) -> FineTuneJobSpec {
    FineTuneJobSpec {
        base_model: "base-mini".into(),
        reasoning,
        training_jsonl: jsonl.into(),
        suffix: None,
        hyperparameters: None,
    }
}

#[tokio::test]
async fn finetune_job_runs_to_success() {
    let stub = Arc::new(Stub::default());
    let base = serve(stub.clone()).await;
    let cfg = config(&base);
    let line = r#"{"messages":[{"role":"system","content":"s"},{"role":"user","content":"u"},{"role":"assistant","content":"a"}]}"#;
    let handle = submit_finetune(&cfg, &job_spec(&format!("{line}\n"), false)).await.unwrap();
    assert_eq!((handle.job_id.as_str(), handle.training_file_id.as_str()), ("ftjob-1", "file-abc"));
    let status = wait_for_finetune(&cfg, &handle, Duration::from_millis(5), Duration::from_secs(5))
        .await
        .unwrap();
    assert_eq!(status.status, "succeeded");
    assert_eq!(status.fine_tuned_model.as_deref(), Some("ft:base:stub:1"));
    assert_eq!(stub.polls.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn malformed_upload_surfaces_provider_message() {
    let stub = Arc::new(Stub::default());
    let base = serve(stub.clone()).await;
    let err = submit_finetune(&config(&base), &job_spec("{\"messages\": []}\nnot json\n", false))
        .await
        .unwrap_err();
    match err {
        ClientError::ProviderRejected { status, message } => {
            assert_eq!(status, 400);
            assert_eq!(message, "Invalid file format: line 2 is not a valid training example");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn reasoning_model_guard_precedes_network() {
    let stub = Arc::new(Stub::default());
    let base = serve(stub.clone()).await;
    let err = submit_finetune(&config(&base), &job_spec("", true)).await.unwrap_err();
    assert!(matches!(err, ClientError::Precondition(_)));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 0);
}
