use cebag_core::io::write_corpus;
use cebag_core::synth::{generate_corpus, SyntheticSpec};

use crate::error::{CliError, Exit};
use crate::inputs::read_bytes;
use crate::render::write_file;
use crate::SynthArgs;

pub fn run(args: SynthArgs) -> Result<Exit, CliError> {
    let mut spec = match (&args.preset, &args.spec) {
        (Some(name), _) => SyntheticSpec::preset(name).map_err(|e| CliError::input(e.to_string()))?,
        (None, Some(path)) => serde_json::from_slice(&read_bytes(path)?)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?,
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let corpus = generate_corpus(&spec).map_err(|e| CliError::input(e.to_string()))?;
    let mut buf = Vec::new();
    write_corpus(&corpus, &mut buf).expect("in-memory write");
    write_file(&args.out, &buf)?;
    eprintln!(
        "wrote {} samples ({} grounded, {} hallucinated, seed {}) -> {}",
        corpus.len(),
        spec.n_grounded,
        spec.n_hallucinated,
        spec.seed,
        args.out.display()
    );
    Ok(Exit::Ok)
}
