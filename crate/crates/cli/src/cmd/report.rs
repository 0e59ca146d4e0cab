use cebag_core::evaluate::EvalReport;

use crate::cmd::eval;
use crate::error::{CliError, Exit};
use crate::inputs::read_bytes;
use crate::{ReportArgs, ReportFormat};

pub fn run(args: ReportArgs) -> Result<Exit, CliError> {
    let reports: Vec<EvalReport> = serde_json::from_slice(&read_bytes(&args.report)?)
        .map_err(|e| CliError::input(format!("{}: not an evaluation report: {e}", args.report.display())))?;
    match args.format {
        ReportFormat::Table => print!("{}", eval::table(&reports)),
        ReportFormat::Csv => print!("{}", String::from_utf8(eval::csv(&reports)).expect("CSV is UTF-8")),
        ReportFormat::Json => print!("{}", String::from_utf8(eval::json(&reports)).expect("JSON is UTF-8")),
    }
    Ok(Exit::Ok)
}
