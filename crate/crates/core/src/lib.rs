//! Deterministic hallucination scores from per-token log-probabilities.
//!
//! A response is scored twice by the same model: once with the image
//! (multimodal) and once with the image removed (text-only). From those two
//! traces this crate derives the token-level predictive variance, the
//! evidence gain and its per-token magnitude, the combined confidence-evidence
//! score `sigma * (1 + |gain| / L)`, and an average-probability baseline. It
//! also evaluates detectors (ROC-AUC, accuracy-rejection AUG, GREEN-threshold
//! stability), persists corpora as JSON lines, and ships seeded synthetic
//! corpora plus brute-force oracles for testing.
//!
//! Corpus-level loops (scoring, sweeps, oracle trials) run on rayon when the
//! default `parallel` feature is enabled and sequentially otherwise, with
//! identical results.

pub mod evaluate;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod oracle;
mod par;
pub mod scoring;
pub mod synth;
pub mod trace;

pub use evaluate::{compare_detectors, evaluate_scores, EvalConfig, EvalError, EvalReport, GroundTruth};
pub use io::{read_corpus, write_corpus, CorpusError, TraceRecord};
pub use metrics::{aug, green_labels, roc_auc, stability_sweep, LabeledScore, MetricsError};
pub use par::is_parallel;
pub use scoring::{score_corpus, score_sample, Detector, DetectorScores};
pub use synth::{generate_corpus, SyntheticSpec};
pub use trace::{Condition, SamplePair, TokenTrace, ValidationError};
