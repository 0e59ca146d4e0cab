use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cebag_core::io::{read_records, CorpusError, TraceRecord};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::client::{CollectError, Collector, TaskFailure};
use crate::task::VqaTask;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("capability probe failed: {0}")]
    Probe(CollectError),
    #[error("output {0} already has records; pass resume to continue it or remove it")]
    OutputExists(PathBuf),
    #[error("cannot resume from {path}: {source}")]
    Existing { path: PathBuf, source: CorpusError },
    #[error("cannot write output {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchOptions {
    /// Skip tasks whose ids already appear in the output and append the rest.
    pub resume: bool,
}

#[derive(Debug, Default)]
pub struct BatchSummary {
    pub total: usize,
    pub skipped: usize,
    pub succeeded: usize,
    pub failures: Vec<TaskFailure>,
}

impl BatchSummary {
    pub fn attempted(&self) -> usize {
        self.succeeded + self.failures.len()
    }
}

/// Reported once per finished task, from the writer.
#[derive(Debug)]
pub enum Progress<'a> {
    Written { sample_id: &'a str, done: usize, of: usize },
    Failed { failure: &'a TaskFailure, done: usize, of: usize },
}

/// Probes the endpoint, then runs every pending task with at most
/// `max_in_flight` tasks active. Records are appended to `out` as they
/// finish, in completion order. Task failures are collected, not raised.
pub async fn run_batch<F>(
    collector: Arc<Collector>,
    tasks: Vec<VqaTask>,
    out: &Path,
    options: BatchOptions,
    mut progress: F,
) -> Result<BatchSummary, BatchError>
where
    F: FnMut(Progress<'_>),
{
    let done = existing_ids(out, options.resume)?;
    let total = tasks.len();
    let pending: Vec<VqaTask> = tasks.into_iter().filter(|t| !done.contains(&t.sample_id)).collect();
    let mut summary = BatchSummary {
        total,
        skipped: total - pending.len(),
        ..BatchSummary::default()
    };
    let mut sink = open_output(out)?;
    if pending.is_empty() {
        return Ok(summary);
    }
    collector.probe().await.map_err(BatchError::Probe)?;

    let of = pending.len();
    let permits = Arc::new(Semaphore::new(collector.config().max_in_flight));
    let mut running = JoinSet::new();
    for task in pending {
        let collector = collector.clone();
        let permits = permits.clone();
        running.spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore is never closed");
            collector.collect_pair(&task).await
        });
    }

    let mut finished = 0;
    while let Some(joined) = running.join_next().await {
        let outcome = match joined {
            Ok(outcome) => outcome,
            Err(e) => std::panic::resume_unwind(e.into_panic()),
        };
        finished += 1;
        match outcome {
            Ok(record) => {
                append(&mut sink, &record).map_err(|source| BatchError::Output {
                    path: out.to_path_buf(),
                    source,
                })?;
                summary.succeeded += 1;
                progress(Progress::Written {
                    sample_id: &record.sample_id,
                    done: finished,
                    of,
                });
            }
            Err(failure) => {
                progress(Progress::Failed {
                    failure: &failure,
                    done: finished,
                    of,
                });
                summary.failures.push(failure);
            }
        }
    }
    summary.failures.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(summary)
}

fn existing_ids(out: &Path, resume: bool) -> Result<BTreeSet<String>, BatchError> {
    let file = match File::open(out) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeSet::new()),
        Err(source) => {
            return Err(BatchError::Output {
                path: out.to_path_buf(),
                source,
            })
        }
    };
    let has_content = file.metadata().map(|m| m.len() > 0).unwrap_or(false);
    if !resume {
        return if has_content {
            Err(BatchError::OutputExists(out.to_path_buf()))
        } else {
            Ok(BTreeSet::new())
        };
    }
    let records = read_records(file).map_err(|source| BatchError::Existing {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(records.into_iter().map(|r| r.sample_id).collect())
}

fn open_output(out: &Path) -> Result<File, BatchError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|source| BatchError::Output {
            path: out.to_path_buf(),
            source,
        })
}

fn append(sink: &mut File, record: &TraceRecord) -> std::io::Result<()> {
    let mut line = record.to_line();
    line.push('\n');
    sink.write_all(line.as_bytes())?;
    sink.flush()
}
