//! In-process chat-completions endpoint for collector tests.
//!
//! Generation requests get a fixed answer. Scoring requests (those with
//! `"logprobs": true`) get one logprob per whitespace-delimited chunk of the
//! final assistant message. Requests carrying an image score higher than
//! requests without one, so a working client produces a positive gain.
//! Faults queued with [`MockEndpoint::push_faults`] are applied to incoming
//! requests in arrival order.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub answer: String,
    /// Replaces the derived image-conditioned logprobs.
    pub scripted_logprobs: Option<Vec<f64>>,
    /// Text-only task passes report this many fewer tokens.
    pub text_token_drop: usize,
    pub logprobs_supported: bool,
    /// Added to every request.
    pub latency: Duration,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            answer: "no acute fracture is seen".to_owned(),
            scripted_logprobs: None,
            text_token_drop: 0,
            logprobs_supported: true,
            latency: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    Status(u16),
    /// Holds the request this long before answering normally.
    Stall(Duration),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    Generate,
    Score,
}

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub kind: RequestKind,
    pub stage: Option<String>,
    pub authorization: Option<String>,
    pub body: Vec<u8>,
}

impl RecordedRequest {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }

    /// True if any image reference appears anywhere in the raw body.
    pub fn mentions_image(&self) -> bool {
        let body = String::from_utf8_lossy(&self.body);
        ["image_url", "data:image", "\"image\""]
            .iter()
            .any(|needle| body.contains(needle))
    }
}

struct Shared {
    config: MockConfig,
    faults: Mutex<VecDeque<Fault>>,
    log: Mutex<Vec<RecordedRequest>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

pub struct MockEndpoint {
    addr: SocketAddr,
    shared: Arc<Shared>,
    server: JoinHandle<()>,
}

impl MockEndpoint {
    /// Binds an ephemeral localhost port and serves on the current runtime.
    pub async fn start(config: MockConfig) -> Self {
        let shared = Arc::new(Shared {
            config,
            faults: Mutex::new(VecDeque::new()),
            log: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(handle))
            .with_state(shared.clone());
        let listener = TcpListener::bind("127.0.0.1:0").await.expect("bind mock port");
        let addr = listener.local_addr().expect("mock address");
        let server = tokio::spawn(async move {
            axum::serve(listener, app).await.expect("mock server");
        });
        Self { addr, shared, server }
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn push_faults(&self, faults: impl IntoIterator<Item = Fault>) {
        self.shared.faults.lock().unwrap().extend(faults);
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.log.lock().unwrap().len()
    }

    /// Requests whose stage header is not `probe`.
    pub fn task_requests(&self) -> Vec<RecordedRequest> {
        self.requests()
            .into_iter()
            .filter(|r| r.stage.as_deref() != Some("probe"))
            .collect()
    }

    pub fn max_in_flight(&self) -> usize {
        self.shared.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for MockEndpoint {
    fn drop(&mut self) {
        self.server.abort();
    }
}

struct InFlight<'a>(&'a Shared);

impl<'a> InFlight<'a> {
    fn enter(shared: &'a Shared) -> Self {
        let now = shared.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        shared.max_in_flight.fetch_max(now, Ordering::SeqCst);
        Self(shared)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Splits after each space, so the chunks concatenate back to the input.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_inclusive(' ').map(str::to_owned).collect()
}

async fn handle(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: Bytes) -> Response {
    let _guard = InFlight::enter(&shared);
    let parsed: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    };
    let kind = if parsed["logprobs"] == json!(true) {
        RequestKind::Score
    } else {
        RequestKind::Generate
    };
    let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_owned);
    let record = RecordedRequest {
        kind,
        stage: header("x-cebag-stage"),
        authorization: header("authorization"),
        body: body.to_vec(),
    };
    let has_image = record.mentions_image();
    let is_probe = record.stage.as_deref() == Some("probe");
    shared.log.lock().unwrap().push(record);

    if !shared.config.latency.is_zero() {
        tokio::time::sleep(shared.config.latency).await;
    }
    let fault = shared.faults.lock().unwrap().pop_front();
    match fault {
        Some(Fault::Status(code)) => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (status, "scripted failure").into_response();
        }
        Some(Fault::Stall(d)) => tokio::time::sleep(d).await,
        None => {}
    }

    match kind {
        RequestKind::Generate => Json(json!({
            "id": "mock-gen",
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": shared.config.answer},
                "finish_reason": "stop"
            }]
        }))
        .into_response(),
        RequestKind::Score => score(&shared.config, &parsed, has_image, is_probe),
    }
}

fn score(config: &MockConfig, request: &Value, has_image: bool, is_probe: bool) -> Response {
    let messages = request["messages"].as_array().cloned().unwrap_or_default();
    let Some(answer) = messages
        .last()
        .filter(|m| m["role"] == "assistant")
        .and_then(|m| m["content"].as_str())
    else {
        return (StatusCode::BAD_REQUEST, "last message must be the assistant answer").into_response();
    };
    let mut message = json!({"role": "assistant", "content": ""});
    if !config.logprobs_supported {
        message["content"] = json!(answer);
        return Json(json!({"choices": [{"index": 0, "message": message}]})).into_response();
    }
    let question_offset = messages
        .first()
        .map(|m| m.to_string().bytes().map(u64::from).sum::<u64>() % 7)
        .unwrap_or(0) as f64
        * 0.02;
    let tokens = tokenize(answer);
    let mut logprobs: Vec<f64> = match &config.scripted_logprobs {
        Some(lp) => lp.clone(),
        None => (0..tokens.len())
            .map(|i| -(0.05 + 0.1 * (i % 4) as f64 + question_offset))
            .collect(),
    };
    let mut tokens: Vec<String> = if logprobs.len() == tokens.len() {
        tokens
    } else {
        (0..logprobs.len()).map(|i| format!("t{i}")).collect()
    };
    if !has_image {
        for lp in &mut logprobs {
            *lp -= 0.4;
        }
        let drop = if is_probe { 0 } else { config.text_token_drop };
        let keep = tokens.len().saturating_sub(drop);
        tokens.truncate(keep);
        logprobs.truncate(keep);
    }
    let content: Vec<Value> = tokens
        .iter()
        .zip(&logprobs)
        .map(|(t, lp)| json!({"token": t, "logprob": lp, "bytes": null, "top_logprobs": []}))
        .collect();
    Json(json!({
        "id": "mock-score",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": message, "logprobs": {"content": content}}]
    }))
    .into_response()
}
