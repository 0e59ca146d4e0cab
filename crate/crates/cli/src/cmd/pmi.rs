use cebag_core::oracle::{run_pmi_trials, PmiTrials};

use crate::error::{CliError, Exit};
use crate::PmiArgs;

pub fn run(args: PmiArgs) -> Result<Exit, CliError> {
    let cfg = PmiTrials {
        max_size: args.size,
        trials: args.trials,
        seed: args.seed,
        pmi_offset: args.pmi_offset,
    };
    let summary = run_pmi_trials(&cfg).map_err(|e| CliError::input(e.to_string()))?;
    if args.json {
        println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    } else {
        let worst = summary
            .worst_cell
            .map(|(t, i, r)| format!(" at trial {t}, image {i}, response {r}"))
            .unwrap_or_default();
        println!(
            "pmi-check: {} trials, {} cells, max |gain - pmi| = {:e}{worst} (tolerance {:e}): {}",
            summary.trials,
            summary.cells_checked,
            summary.max_abs_diff,
            summary.tolerance,
            if summary.passed() { "ok" } else { "VIOLATED" }
        );
    }
    Ok(if summary.passed() { Exit::Ok } else { Exit::PmiViolation })
}
