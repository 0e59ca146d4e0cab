use std::collections::BTreeMap;
use std::fmt;

use cebag_core::io::TraceRecord;
use cebag_core::{Condition, SamplePair, TokenTrace, ValidationError};
use reqwest::header::CONTENT_TYPE;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, info, warn};
use url::Url;

use crate::config::{ConfigError, EndpointConfig};
use crate::task::{ImageError, VqaTask};

/// Sampling temperature of the generation pass.
pub const GENERATION_TEMPERATURE: f64 = 0.1;

/// Header naming the stage of each request, for server-side log correlation.
pub const STAGE_HEADER: &str = "x-cebag-stage";

const REMEDIATION: &str = "the endpoint must return choices[0].logprobs.content with one \
    {token, logprob} entry per token of the supplied assistant message when called with \
    logprobs=true, echo=true, max_tokens=0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Probe,
    Generate,
    ScoreMm,
    ScoreText,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Probe => "probe",
            Stage::Generate => "generate",
            Stage::ScoreMm => "score_mm",
            Stage::ScoreText => "score_text",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, attempts: u32, body: String },
    #[error("request failed after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("empty answer")]
    EmptyAnswer,
    #[error("capability missing: {detail}; {REMEDIATION}")]
    CapabilityMissing { detail: String },
    #[error("length mismatch multimodal={multimodal}/text_only={text_only}")]
    LengthMismatch { multimodal: usize, text_only: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("invalid trace: {0}")]
    Trace(#[from] ValidationError),
}

/// A task that did not produce a record.
#[derive(Debug, Error)]
#[error("{sample_id}: {stage}: {error}")]
pub struct TaskFailure {
    pub sample_id: String,
    pub stage: Stage,
    pub error: CollectError,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Three-pass client for one endpoint.
#[derive(Debug, Clone)]
pub struct Collector {
    http: reqwest::Client,
    cfg: EndpointConfig,
    url: Url,
}

impl Collector {
    pub fn new(cfg: EndpointConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let url = cfg.completions_url()?;
        let http = reqwest::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| ConfigError::Client(e.to_string()))?;
        Ok(Self { http, cfg, url })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Scores a fixed two-token exchange without an image. Fails with
    /// [`CollectError::CapabilityMissing`] when no per-token logprobs come back.
    pub async fn probe(&self) -> Result<(), CollectError> {
        let body = self.score_body(&user_message("Reply with OK.", None), "OK");
        let response = self.post(Stage::Probe, "-", &body).await?;
        parse_scored_tokens(&response).map(|_| ())
    }

    /// One generation request with the image attached. Returns the answer verbatim.
    pub async fn generate_answer(&self, task: &VqaTask) -> Result<String, CollectError> {
        let image = task.image_url()?;
        let body = json!({
            "model": self.cfg.model_name,
            "messages": [user_message(&task.question, Some(&image))],
            "temperature": GENERATION_TEMPERATURE,
            "n": 1,
            "stream": false,
        });
        let response = self.post(Stage::Generate, &task.sample_id, &body).await?;
        let content = &response["choices"][0]["message"]["content"];
        match content {
            Value::String(s) if !s.trim().is_empty() => Ok(s.clone()),
            Value::String(_) | Value::Null => Err(CollectError::EmptyAnswer),
            _ => Err(CollectError::Malformed(
                "choices[0].message.content is not a string".to_owned(),
            )),
        }
    }

    /// Teacher-forced scoring of `answer`. Without the image the request
    /// carries no image reference at all.
    pub async fn score_pass(&self, task: &VqaTask, answer: &str, with_image: bool) -> Result<TokenTrace, CollectError> {
        if answer.trim().is_empty() {
            return Err(CollectError::EmptyAnswer);
        }
        let (stage, condition, image) = if with_image {
            (Stage::ScoreMm, Condition::Multimodal, Some(task.image_url()?))
        } else {
            (Stage::ScoreText, Condition::TextOnly, None)
        };
        let body = self.score_body(&user_message(&task.question, image.as_deref()), answer);
        let response = self.post(stage, &task.sample_id, &body).await?;
        let (tokens, logprobs) = parse_scored_tokens(&response)?;
        Ok(TokenTrace::new(tokens, logprobs, condition)?)
    }

    /// Generation followed by both scoring passes: exactly three requests
    /// when nothing is retried.
    pub async fn collect_pair(&self, task: &VqaTask) -> Result<TraceRecord, TaskFailure> {
        let fail = |stage: Stage| {
            move |error: CollectError| TaskFailure {
                sample_id: task.sample_id.clone(),
                stage,
                error,
            }
        };
        let answer = self.generate_answer(task).await.map_err(fail(Stage::Generate))?;
        let mm = self.score_pass(task, &answer, true).await.map_err(fail(Stage::ScoreMm))?;
        let text = self.score_pass(task, &answer, false).await.map_err(fail(Stage::ScoreText))?;
        if mm.len() != text.len() {
            return Err(fail(Stage::ScoreText)(CollectError::LengthMismatch {
                multimodal: mm.len(),
                text_only: text.len(),
            }));
        }
        if mm.tokens() != text.tokens() {
            warn!(sample_id = %task.sample_id, "token strings differ between scoring passes");
        }
        let meta = BTreeMap::from([
            ("decoding".to_owned(), "greedy".to_owned()),
            ("model".to_owned(), self.cfg.model_name.clone()),
            ("temperature".to_owned(), GENERATION_TEMPERATURE.to_string()),
        ]);
        let pair = SamplePair::new(task.sample_id.clone(), mm, text)
            .and_then(|p| p.with_green_score(task.green_score))
            .map_err(|e| fail(Stage::ScoreText)(e.into()))?
            .with_meta(Some(meta));
        Ok(TraceRecord::from_pair(&pair))
    }

    fn score_body(&self, user: &Value, answer: &str) -> Value {
        json!({
            "model": self.cfg.model_name,
            "messages": [user, {"role": "assistant", "content": answer}],
            "max_tokens": 0,
            "logprobs": true,
            "echo": true,
            "stream": false,
        })
    }

    async fn post(&self, stage: Stage, sample_id: &str, body: &Value) -> Result<Value, CollectError> {
        let bytes = serde_json::to_vec(body).expect("JSON values always serialize");
        let request_sha256 = sha256_hex(&bytes);
        let attempts = self.cfg.retry_budget + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            if attempt > 1 {
                tokio::time::sleep(self.cfg.backoff(attempt - 1)).await;
            }
            if self.cfg.log_bodies {
                debug!(%stage, sample_id, body = %String::from_utf8_lossy(&bytes), "request body");
            }
            let mut request = self
                .http
                .post(self.url.clone())
                .header(CONTENT_TYPE, "application/json")
                .header(STAGE_HEADER, stage.name())
                .body(bytes.clone());
            if let Some(key) = &self.cfg.api_key {
                request = request.bearer_auth(key.expose());
            }
            let outcome = match request.send().await {
                Ok(response) => {
                    let status = response.status();
                    response.bytes().await.map(|b| (status, b))
                }
                Err(e) => Err(e),
            };
            let (status, payload) = match outcome {
                Ok(ok) => ok,
                Err(e) => {
                    warn!(%stage, sample_id, attempt, request_sha256, error = %e, "request failed");
                    last = Some(CollectError::Transport {
                        attempts: attempt,
                        detail: e.to_string(),
                    });
                    continue;
                }
            };
            info!(
                %stage,
                sample_id,
                attempt,
                status = status.as_u16(),
                request_sha256,
                response_sha256 = %sha256_hex(&payload),
                "response"
            );
            if self.cfg.log_bodies {
                debug!(%stage, sample_id, body = %String::from_utf8_lossy(&payload), "response body");
            }
            if status.is_success() {
                return serde_json::from_slice(&payload)
                    .map_err(|e| CollectError::Malformed(format!("response is not JSON: {e}")));
            }
            let error = CollectError::Status {
                status: status.as_u16(),
                attempts: attempt,
                body: snippet(&payload),
            };
            if status.as_u16() == 429 || status.is_server_error() {
                last = Some(error);
                continue;
            }
            return Err(error);
        }
        Err(last.expect("at least one attempt is made"))
    }
}

fn user_message(question: &str, image_url: Option<&str>) -> Value {
    let mut content = vec![json!({"type": "text", "text": question})];
    if let Some(url) = image_url {
        content.push(json!({"type": "image_url", "image_url": {"url": url}}));
    }
    json!({"role": "user", "content": content})
}

fn snippet(body: &[u8]) -> String {
    let text = String::from_utf8_lossy(body);
    let mut out: String = text.chars().take(200).collect();
    if text.chars().count() > 200 {
        out.push_str("...");
    }
    out
}

fn parse_scored_tokens(response: &Value) -> Result<(Vec<String>, Vec<f64>), CollectError> {
    let choice = response
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| CollectError::Malformed("response has no choices[0]".to_owned()))?;
    let content = match choice.get("logprobs") {
        None | Some(Value::Null) => {
            return Err(CollectError::CapabilityMissing {
                detail: "response has no choices[0].logprobs".to_owned(),
            })
        }
        Some(lp) => lp.get("content").and_then(Value::as_array).ok_or_else(|| {
            CollectError::CapabilityMissing {
                detail: "choices[0].logprobs.content is not a list".to_owned(),
            }
        })?,
    };
    if content.is_empty() {
        return Err(CollectError::CapabilityMissing {
            detail: "no tokens were scored".to_owned(),
        });
    }
    let mut tokens = Vec::with_capacity(content.len());
    let mut logprobs = Vec::with_capacity(content.len());
    for (i, entry) in content.iter().enumerate() {
        let token = entry["token"]
            .as_str()
            .ok_or_else(|| CollectError::Malformed(format!("logprobs.content[{i}].token is not a string")))?;
        let lp = entry["logprob"]
            .as_f64()
            .ok_or_else(|| CollectError::Malformed(format!("logprobs.content[{i}].logprob is not a number")))?;
        tokens.push(token.to_owned());
        logprobs.push(lp);
    }
    Ok((tokens, logprobs))
}
