//! Loading corpora, score files and label files from disk.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use cebag_core::evaluate::GroundTruth;
use cebag_core::io::{read_corpus, read_external_scores, read_ground_truth, read_scores};
use cebag_core::scoring::{score_corpus, DetectorScores};
use cebag_core::SamplePair;
use serde_json::Value;

use crate::error::CliError;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io("read", path, e))
}

pub fn load_corpus(path: &Path) -> Result<Vec<SamplePair>, CliError> {
    read_corpus(&read_bytes(path)?[..]).map_err(|e| CliError::corpus(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Corpus,
    Scores,
}

/// Decides from the first non-blank line. Empty files count as corpora.
pub fn detect_kind(path: &Path, bytes: &[u8]) -> Result<InputKind, CliError> {
    let Some(first) = bytes
        .split(|&b| b == b'\n')
        .find(|l| !l.iter().all(u8::is_ascii_whitespace))
    else {
        return Ok(InputKind::Corpus);
    };
    let value: Value = serde_json::from_slice(first)
        .map_err(|e| CliError::input(format!("{}: line 1 is not JSON: {e}", path.display())))?;
    if value.get("logprobs_mm").is_some() {
        Ok(InputKind::Corpus)
    } else if value.get("cebag").is_some() && value.get("sigma").is_some() {
        Ok(InputKind::Scores)
    } else {
        Err(CliError::input(format!(
            "{}: neither a trace corpus nor a score file (expected logprobs_mm or cebag fields)",
            path.display()
        )))
    }
}

/// Scores plus aligned ground truth, from a corpus or from a score file
/// with a separate label file.
pub fn load_scored(input: &Path, labels: Option<&Path>) -> Result<(Vec<DetectorScores>, Vec<GroundTruth>), CliError> {
    let bytes = read_bytes(input)?;
    let (scores, embedded) = match detect_kind(input, &bytes)? {
        InputKind::Corpus => {
            let corpus = read_corpus(&bytes[..]).map_err(|e| CliError::corpus(input, e))?;
            let truth: Vec<GroundTruth> = corpus.iter().map(GroundTruth::of).collect();
            (score_corpus(&corpus), Some(truth))
        }
        InputKind::Scores => (read_scores(&bytes[..]).map_err(|e| CliError::corpus(input, e))?, None),
    };
    let truth = match (labels, embedded) {
        (Some(path), _) => {
            let all = read_ground_truth(&read_bytes(path)?[..]).map_err(|e| CliError::corpus(path, e))?;
            align(&scores, all, path)?
        }
        (None, Some(truth)) => truth,
        (None, None) => {
            return Err(CliError::input(format!(
                "{} is a score file; pass --labels with a corpus or label file",
                input.display()
            )))
        }
    };
    Ok((scores, truth))
}

fn align(scores: &[DetectorScores], truth: Vec<GroundTruth>, path: &Path) -> Result<Vec<GroundTruth>, CliError> {
    let mut by_id: HashMap<String, GroundTruth> = truth.into_iter().map(|t| (t.sample_id.clone(), t)).collect();
    scores
        .iter()
        .map(|s| {
            by_id.remove(&s.sample_id).ok_or_else(|| {
                CliError::input(format!("{}: no label for sample {:?}", path.display(), s.sample_id))
            })
        })
        .collect()
}

/// Parses `name=path`.
pub fn parse_external(spec: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=PATH, got {spec:?}"))?;
    let valid = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if !valid {
        return Err(format!("detector name {name:?} must be non-empty ASCII letters, digits, '_' or '-'"));
    }
    if path.is_empty() {
        return Err(format!("missing path for detector {name:?}"));
    }
    Ok((name.to_owned(), PathBuf::from(path)))
}

pub fn load_external(specs: &[(String, PathBuf)]) -> Result<BTreeMap<String, Vec<(String, f64)>>, CliError> {
    let mut out = BTreeMap::new();
    for (name, path) in specs {
        let scores = read_external_scores(&read_bytes(path)?[..]).map_err(|e| CliError::corpus(path, e))?;
        if out.insert(name.clone(), scores).is_some() {
            return Err(CliError::input(format!("external detector {name:?} given twice")));
        }
    }
    Ok(out)
}
