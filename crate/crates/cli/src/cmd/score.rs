use cebag_core::io::write_scores;
use cebag_core::scoring::score_corpus;

use crate::error::{CliError, Exit};
use crate::inputs::load_corpus;
use crate::render::write_file;
use crate::ScoreArgs;

pub fn run(args: ScoreArgs) -> Result<Exit, CliError> {
    let corpus = load_corpus(&args.input)?;
    let scores = score_corpus(&corpus);
    let mut buf = Vec::new();
    write_scores(&scores, &mut buf).expect("in-memory write");
    write_file(&args.out, &buf)?;
    eprintln!("scored {} samples -> {}", scores.len(), args.out.display());
    Ok(Exit::Ok)
}
