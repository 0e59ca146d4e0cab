use cebag_core::evaluate::{evaluate_scores, EvalConfig, EvalReport};

use crate::error::{CliError, Exit};
use crate::inputs::{load_external, load_scored};
use crate::render::{csv_bytes, human, num, pct, write_file, Table};
use crate::EvalArgs;

pub const CSV_HEADER: [&str; 7] = ["detector", "auc", "aug", "auc_pct", "aug_pct", "n_positive", "n_negative"];

pub fn run(args: EvalArgs) -> Result<Exit, CliError> {
    let (scores, truth) = load_scored(&args.input, args.labels.as_deref())?;
    let external = load_external(&args.external)?;
    let config = EvalConfig {
        green_threshold: args.green_threshold,
        stability_thresholds: args.thresholds,
        lambda_grid: args.lambda_grid,
        detectors: args.detectors,
    };
    let reports = evaluate_scores(&scores, &truth, &external, &config)?;
    print!("{}", table(&reports));
    if let Some(path) = &args.report {
        write_file(path, &json(&reports))?;
    }
    if let Some(path) = &args.csv {
        write_file(path, &csv(&reports))?;
    }
    Ok(Exit::Ok)
}

pub fn table(reports: &[EvalReport]) -> String {
    let mut t = Table::new(["detector", "AUC%", "AUG%", "n_pos", "n_neg"]);
    for r in reports {
        t.row([
            r.detector_name.clone(),
            pct(r.auc),
            pct(r.aug),
            r.n_positive.to_string(),
            r.n_negative.to_string(),
        ]);
    }
    let mut out = t.render();
    if let Some(first) = reports.first() {
        out.push_str(&format!(
            "labels: green_score < {} is hallucinated\n",
            human(first.config_echo.green_threshold)
        ));
    }
    for r in reports {
        if let Some(best) = r.config_echo.best_lambda {
            out.push_str(&format!("{}: best lambda {}\n", r.detector_name, human(best)));
        }
    }
    out
}

pub fn csv(reports: &[EvalReport]) -> Vec<u8> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.detector_name.clone(),
                num(r.auc),
                num(r.aug),
                pct(r.auc),
                pct(r.aug),
                r.n_positive.to_string(),
                r.n_negative.to_string(),
            ]
        })
        .collect();
    csv_bytes(&CSV_HEADER, &rows)
}

pub fn json(reports: &[EvalReport]) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(reports).expect("reports serialize");
    bytes.push(b'\n');
    bytes
}
