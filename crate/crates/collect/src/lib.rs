//! Collects paired log-probability traces from a chat-completions endpoint.
//!
//! Each task costs three requests: one generation with the image attached,
//! then two teacher-forced scoring passes of the generated answer, with and
//! without the image. The endpoint must return per-token logprobs for a
//! supplied assistant message; [`Collector::probe`] checks this before a
//! batch starts.

mod batch;
mod client;
mod config;
mod task;

pub use batch::{run_batch, BatchError, BatchOptions, BatchSummary, Progress};
pub use client::{sha256_hex, CollectError, Collector, Stage, TaskFailure, GENERATION_TEMPERATURE, STAGE_HEADER};
pub use config::{ApiKey, ConfigError, EndpointConfig, API_KEY_ENV};
pub use task::{read_tasks, read_tasks_file, ImageError, TaskError, VqaTask};
