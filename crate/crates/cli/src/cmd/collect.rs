use std::sync::Arc;
use std::time::Duration;

use cebag_collect::{read_tasks_file, run_batch, ApiKey, BatchError, BatchOptions, Collector, EndpointConfig, Progress};
use serde_json::json;
use tracing::Level;

use crate::error::{CliError, Exit};
use crate::render::write_file;
use crate::CollectArgs;

pub fn run(args: CollectArgs) -> Result<Exit, CliError> {
    init_logging(&args);
    let tasks = read_tasks_file(&args.tasks).map_err(|e| CliError::input(format!("{}: {e}", args.tasks.display())))?;
    if !(args.timeout_secs.is_finite() && args.timeout_secs > 0.0) {
        return Err(CliError::input("--timeout-secs must be a positive number"));
    }
    let api_key = match &args.api_key_file {
        Some(path) => Some(ApiKey::from_file(path).map_err(|e| CliError::input(e.to_string()))?),
        None => ApiKey::from_env(),
    };
    let cfg = EndpointConfig {
        api_key,
        timeout: Duration::from_secs_f64(args.timeout_secs),
        max_in_flight: args.max_in_flight,
        retry_budget: args.retry_budget,
        retry_backoff: Duration::from_millis(args.retry_backoff_ms),
        log_bodies: args.log_bodies,
        ..EndpointConfig::new(args.endpoint.clone(), args.model.clone())
    };
    let collector = Arc::new(Collector::new(cfg).map_err(|e| CliError::input(e.to_string()))?);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::input(format!("cannot start runtime: {e}")))?;
    let options = BatchOptions { resume: args.resume };
    let summary = runtime
        .block_on(run_batch(collector, tasks, &args.out, options, |p| match p {
            Progress::Written { sample_id, done, of } => eprintln!("[{done}/{of}] {sample_id} ok"),
            Progress::Failed { failure, done, of } => eprintln!("[{done}/{of}] {failure}"),
        }))
        .map_err(|e| match e {
            BatchError::Probe(_) => CliError::new(Exit::EndpointIncapable, e.to_string()),
            other => CliError::input(other.to_string()),
        })?;

    if let Some(path) = &args.failures {
        let mut bytes = Vec::new();
        for f in &summary.failures {
            let line = json!({"sample_id": f.sample_id, "stage": f.stage.name(), "error": f.error.to_string()});
            bytes.extend_from_slice(line.to_string().as_bytes());
            bytes.push(b'\n');
        }
        write_file(path, &bytes)?;
    }
    println!(
        "collected {} of {} tasks ({} failed, {} skipped as already present) -> {}",
        summary.succeeded,
        summary.total,
        summary.failures.len(),
        summary.skipped,
        args.out.display()
    );
    if summary.failures.is_empty() {
        Ok(Exit::Ok)
    } else {
        Err(CliError::new(
            Exit::PartialFailure,
            format!("{} task(s) failed; rerun with --resume to retry them", summary.failures.len()),
        ))
    }
}

fn init_logging(args: &CollectArgs) {
    let level = if args.log_bodies {
        Level::DEBUG
    } else if args.verbose {
        Level::INFO
    } else {
        Level::WARN
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}
