use cebag_core::evaluate::{best_lambda, evaluate_scores, lambda_sweep, EvalConfig, EvalReport, LambdaPoint};
use cebag_core::metrics::stability_spread;
use serde_json::json;

use crate::error::{CliError, Exit};
use crate::inputs::load_scored;
use crate::render::{csv_bytes, human, num, pct, write_file, Table};
use crate::SweepArgs;

pub const STABILITY_HEADER: [&str; 6] = ["detector", "threshold", "n_positive", "n_negative", "auc", "auc_pct"];
pub const LAMBDA_HEADER: [&str; 6] = ["lambda", "auc", "aug", "auc_pct", "aug_pct", "best"];

pub fn run(args: SweepArgs) -> Result<Exit, CliError> {
    let (scores, truth) = load_scored(&args.input, None)?;
    if let Some(t) = truth.iter().find(|t| t.green_score.is_none()) {
        return Err(CliError::input(format!(
            "{}: sweep needs a green_score on every sample; {:?} has none",
            args.input.display(),
            t.sample_id
        )));
    }
    let config = EvalConfig {
        green_threshold: args.green_threshold,
        stability_thresholds: args.thresholds,
        lambda_grid: args.lambda_grid,
        detectors: args.detectors,
    };
    let reports = evaluate_scores(&scores, &truth, &Default::default(), &config)?;
    let labels: Vec<bool> = truth
        .iter()
        .map(|t| t.label_at(config.green_threshold))
        .collect::<Result<_, _>>()?;
    let lambda = lambda_sweep(&scores, &labels, &config.lambda_grid)?;
    let best = best_lambda(&lambda).expect("grid is non-empty").lambda;

    println!("AUC% by green threshold");
    print!("{}", stability_table(&reports, &config.stability_thresholds));
    println!();
    println!("AUC% by lambda (green_score < {} is hallucinated)", human(config.green_threshold));
    print!("{}", lambda_table(&lambda, best));

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io("create", &args.out_dir, e))?;
    write_file(&args.out_dir.join("stability.csv"), &stability_csv(&reports))?;
    write_file(&args.out_dir.join("lambda.csv"), &lambda_csv(&lambda, best))?;
    let stability: Vec<_> = reports
        .iter()
        .map(|r| json!({"detector": r.detector_name, "points": r.stability, "spread": stability_spread(&r.stability)}))
        .collect();
    let doc = json!({
        "green_threshold": config.green_threshold,
        "best_lambda": best,
        "lambda": lambda,
        "stability": stability,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("sweep serializes");
    bytes.push(b'\n');
    write_file(&args.out_dir.join("sweep.json"), &bytes)?;
    Ok(Exit::Ok)
}

fn auc_cell(auc: Option<f64>) -> String {
    auc.map(pct).unwrap_or_else(|| "n/a".to_owned())
}

fn stability_table(reports: &[EvalReport], thresholds: &[f64]) -> String {
    let mut headers = vec!["threshold".to_owned(), "n_pos".to_owned(), "n_neg".to_owned()];
    headers.extend(reports.iter().map(|r| r.detector_name.clone()));
    let mut t = Table::new(headers);
    for (i, &threshold) in thresholds.iter().enumerate() {
        let first = &reports[0].stability[i];
        let mut row = vec![human(threshold), first.n_positive.to_string(), first.n_negative.to_string()];
        row.extend(reports.iter().map(|r| auc_cell(r.stability[i].auc)));
        t.row(row);
    }
    let mut spread = vec!["spread".to_owned(), String::new(), String::new()];
    spread.extend(reports.iter().map(|r| auc_cell(stability_spread(&r.stability))));
    t.row(spread);
    t.render()
}

fn stability_csv(reports: &[EvalReport]) -> Vec<u8> {
    let mut rows = Vec::new();
    for r in reports {
        for p in &r.stability {
            rows.push(vec![
                r.detector_name.clone(),
                num(p.threshold),
                p.n_positive.to_string(),
                p.n_negative.to_string(),
                p.auc.map(num).unwrap_or_default(),
                p.auc.map(pct).unwrap_or_default(),
            ]);
        }
    }
    csv_bytes(&STABILITY_HEADER, &rows)
}

fn lambda_table(points: &[LambdaPoint], best: f64) -> String {
    let mut t = Table::new(["lambda", "AUC%", "AUG%", "best"]);
    for p in points {
        t.row([human(p.lambda), pct(p.auc), pct(p.aug), mark(p.lambda == best).to_owned()]);
    }
    t.render()
}

fn lambda_csv(points: &[LambdaPoint], best: f64) -> Vec<u8> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                num(p.lambda),
                num(p.auc),
                num(p.aug),
                pct(p.auc),
                pct(p.aug),
                (p.lambda == best).to_string(),
            ]
        })
        .collect();
    csv_bytes(&LAMBDA_HEADER, &rows)
}

fn mark(best: bool) -> &'static str {
    if best {
        "*"
    } else {
        ""
    }
}
