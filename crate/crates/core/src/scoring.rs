//! Per-sample detector scores.
//!
//! All log-probabilities are natural-log, and every detector is oriented so
//! that a higher value means "more likely hallucinated".
//!
//! * `sigma`: population standard deviation (divisor `L`) of the
//!   image-conditioned per-token log-probabilities. A single-token response
//!   has `sigma == 0`.
//! * `gain`: sequence log-probability with the image minus without it.
//! * `evidence`: `|gain| / L`, nats per token.
//! * `cebag`: `sigma * (1 + evidence)`.
//! * `avgprob_neg`: negated mean token probability.

use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

use crate::numeric::{exact_sum, population_std};
use crate::par;
use crate::trace::{Condition, SamplePair, TokenTrace, ValidationError};

/// Default weight grid for the min-max normalized variant.
pub const DEFAULT_LAMBDA_GRID: [f64; 16] = [
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0,
];

/// Sum of per-token log-probabilities, rounded once.
pub fn sequence_logprob(trace: &TokenTrace) -> f64 {
    exact_sum(trace.logprobs().iter().copied())
}

/// Evidence gain of a validated pair.
pub fn evidence_gain(pair: &SamplePair) -> f64 {
    sequence_logprob(pair.multimodal()) - sequence_logprob(pair.text_only())
}

/// Evidence gain from two loose traces; checks conditions and lengths.
pub fn evidence_gain_of(multimodal: &TokenTrace, text_only: &TokenTrace) -> Result<f64, ValidationError> {
    multimodal.expect_condition(Condition::Multimodal)?;
    text_only.expect_condition(Condition::TextOnly)?;
    if multimodal.len() != text_only.len() {
        return Err(ValidationError::LengthMismatch {
            multimodal: multimodal.len(),
            text_only: text_only.len(),
        });
    }
    Ok(sequence_logprob(multimodal) - sequence_logprob(text_only))
}

pub fn evidence_magnitude(gain: f64, length: NonZeroUsize) -> f64 {
    gain.abs() / length.get() as f64
}

/// Token-level predictive variance of an image-conditioned trace.
pub fn token_variance(trace: &TokenTrace) -> Result<f64, ValidationError> {
    trace.expect_condition(Condition::Multimodal)?;
    Ok(population_std(trace.logprobs()).unwrap_or(0.0))
}

pub fn cebag_score(sigma: f64, evidence: f64) -> f64 {
    sigma * (1.0 + evidence)
}

/// Negated mean token probability of an image-conditioned trace, in `[-1, 0]`.
pub fn avgprob_score(trace: &TokenTrace) -> Result<f64, ValidationError> {
    trace.expect_condition(Condition::Multimodal)?;
    let total = exact_sum(trace.logprobs().iter().map(|lp| lp.exp()));
    Ok(-(total / trace.len() as f64))
}

/// All built-in detector outputs for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorScores {
    pub sample_id: String,
    pub sigma: f64,
    pub gain: f64,
    pub evidence: f64,
    pub cebag: f64,
    pub avgprob_neg: f64,
    pub length: usize,
}

/// Per-sample detectors; the corpus-level normalized variant lives in
/// [`cebag_lambda_scores`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    AvgProb,
    Cebag,
    EvidenceOnly,
    SigmaOnly,
}

impl Detector {
    pub const ALL: [Detector; 4] = [
        Detector::AvgProb,
        Detector::Cebag,
        Detector::EvidenceOnly,
        Detector::SigmaOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Detector::AvgProb => "avgprob",
            Detector::Cebag => "cebag",
            Detector::EvidenceOnly => "evidence_only",
            Detector::SigmaOnly => "sigma_only",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == name)
    }
}

impl DetectorScores {
    pub fn get(&self, detector: Detector) -> f64 {
        match detector {
            Detector::AvgProb => self.avgprob_neg,
            Detector::Cebag => self.cebag,
            Detector::EvidenceOnly => self.evidence,
            Detector::SigmaOnly => self.sigma,
        }
    }
}

/// Scores one pair. Pure: identical input gives bit-identical output.
pub fn score_sample(pair: &SamplePair) -> DetectorScores {
    let mm = pair.multimodal();
    // Conditions are enforced by SamplePair construction.
    let sigma = population_std(mm.logprobs()).unwrap_or(0.0);
    let gain = evidence_gain(pair);
    let length = NonZeroUsize::new(pair.len()).expect("validated traces are non-empty");
    let evidence = evidence_magnitude(gain, length);
    let avgprob_neg = avgprob_score(mm).expect("multimodal condition checked at construction");
    DetectorScores {
        sample_id: pair.sample_id().to_owned(),
        sigma,
        gain,
        evidence,
        cebag: cebag_score(sigma, evidence),
        avgprob_neg,
        length: length.get(),
    }
}

/// Scores every pair, in input order. Parallel when the `parallel` feature is on.
pub fn score_corpus(pairs: &[SamplePair]) -> Vec<DetectorScores> {
    par::map_slice(pairs, score_sample)
}

pub fn score_corpus_sequential(pairs: &[SamplePair]) -> Vec<DetectorScores> {
    pairs.iter().map(score_sample).collect()
}

/// Min-max normalizes to `[0, 1]`; a zero-range feature maps to all zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range <= 0.0 || range.is_nan() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / range).collect()
}

/// `sigma_hat + lambda * evidence_hat`, each feature min-max normalized over
/// the corpus.
pub fn cebag_lambda_scores(
    corpus: &[DetectorScores],
    lambda: f64,
) -> Result<Vec<(String, f64)>, ValidationError> {
    if corpus.is_empty() {
        return Err(ValidationError::EmptyCorpus);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ValidationError::InvalidLambda(lambda));
    }
    let sigma: Vec<f64> = corpus.iter().map(|s| s.sigma).collect();
    let evidence: Vec<f64> = corpus.iter().map(|s| s.evidence).collect();
    let sigma_hat = min_max_normalize(&sigma);
    let evidence_hat = min_max_normalize(&evidence);
    Ok(corpus
        .iter()
        .zip(sigma_hat.iter().zip(&evidence_hat))
        .map(|(s, (sh, eh))| (s.sample_id.clone(), sh + lambda * eh))
        .collect())
}
