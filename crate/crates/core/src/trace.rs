//! Validated per-token log-probability traces and matched sample pairs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Conditioning under which a response was scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Image and question.
    Multimodal,
    /// Question only, image removed.
    TextOnly,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Multimodal => f.write_str("multimodal"),
            Condition::TextOnly => f.write_str("text_only"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("empty trace: at least one token is required")]
    EmptyTrace,
    #[error("token count {tokens} does not match logprob count {logprobs}")]
    TokenCountMismatch { tokens: usize, logprobs: usize },
    #[error("non-finite logprob at index {index}")]
    NonFiniteLogprob { index: usize },
    #[error("positive logprob {value} at index {index}")]
    PositiveLogprob { index: usize, value: f64 },
    #[error("length mismatch: multimodal={multimodal} text_only={text_only}")]
    LengthMismatch { multimodal: usize, text_only: usize },
    #[error("expected a {expected} trace, got {found}")]
    WrongCondition { expected: Condition, found: Condition },
    #[error("green score {0} outside [0, 1]")]
    GreenOutOfRange(f64),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("lambda {0} must be finite and non-negative")]
    InvalidLambda(f64),
}

/// One scored response under one condition.
///
/// Invariants checked at construction: equal token/logprob counts, at least
/// one token, and every logprob finite and `<= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTrace {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
    condition: Condition,
}

impl TokenTrace {
    pub fn new(
        tokens: Vec<String>,
        logprobs: Vec<f64>,
        condition: Condition,
    ) -> Result<Self, ValidationError> {
        if tokens.len() != logprobs.len() {
            return Err(ValidationError::TokenCountMismatch {
                tokens: tokens.len(),
                logprobs: logprobs.len(),
            });
        }
        validate_logprobs(&logprobs)?;
        Ok(Self {
            tokens,
            logprobs,
            condition,
        })
    }

    /// Trace with empty display tokens.
    pub fn from_logprobs(logprobs: Vec<f64>, condition: Condition) -> Result<Self, ValidationError> {
        let tokens = vec![String::new(); logprobs.len()];
        Self::new(tokens, logprobs, condition)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    /// Number of tokens, always at least 1.
    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn expect_condition(&self, expected: Condition) -> Result<(), ValidationError> {
        if self.condition == expected {
            Ok(())
        } else {
            Err(ValidationError::WrongCondition {
                expected,
                found: self.condition,
            })
        }
    }
}

/// Checks the logprob-level invariants shared by traces and records.
pub fn validate_logprobs(logprobs: &[f64]) -> Result<(), ValidationError> {
    if logprobs.is_empty() {
        return Err(ValidationError::EmptyTrace);
    }
    for (index, &value) in logprobs.iter().enumerate() {
        if !value.is_finite() {
            return Err(ValidationError::NonFiniteLogprob { index });
        }
        if value > 0.0 {
            return Err(ValidationError::PositiveLogprob { index, value });
        }
    }
    Ok(())
}

pub fn validate_green(score: f64) -> Result<(), ValidationError> {
    if (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(ValidationError::GreenOutOfRange(score))
    }
}

/// The unit of detection: one response scored with and without the image.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    sample_id: String,
    multimodal: TokenTrace,
    text_only: TokenTrace,
    green_score: Option<f64>,
    label: Option<bool>,
    meta: Option<BTreeMap<String, String>>,
}

impl SamplePair {
    pub fn new(
        sample_id: impl Into<String>,
        multimodal: TokenTrace,
        text_only: TokenTrace,
    ) -> Result<Self, ValidationError> {
        multimodal.expect_condition(Condition::Multimodal)?;
        text_only.expect_condition(Condition::TextOnly)?;
        if multimodal.len() != text_only.len() {
            return Err(ValidationError::LengthMismatch {
                multimodal: multimodal.len(),
                text_only: text_only.len(),
            });
        }
        Ok(Self {
            sample_id: sample_id.into(),
            multimodal,
            text_only,
            green_score: None,
            label: None,
            meta: None,
        })
    }

    /// Convenience constructor from two raw logprob vectors.
    pub fn from_logprobs(
        sample_id: impl Into<String>,
        multimodal: Vec<f64>,
        text_only: Vec<f64>,
    ) -> Result<Self, ValidationError> {
        Self::new(
            sample_id,
            TokenTrace::from_logprobs(multimodal, Condition::Multimodal)?,
            TokenTrace::from_logprobs(text_only, Condition::TextOnly)?,
        )
    }

    pub fn with_green_score(mut self, green_score: Option<f64>) -> Result<Self, ValidationError> {
        if let Some(g) = green_score {
            validate_green(g)?;
        }
        self.green_score = green_score;
        Ok(self)
    }

    pub fn with_label(mut self, label: Option<bool>) -> Self {
        self.label = label;
        self
    }

    pub fn with_meta(mut self, meta: Option<BTreeMap<String, String>>) -> Self {
        self.meta = meta;
        self
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn multimodal(&self) -> &TokenTrace {
        &self.multimodal
    }

    pub fn text_only(&self) -> &TokenTrace {
        &self.text_only
    }

    pub fn green_score(&self) -> Option<f64> {
        self.green_score
    }

    /// Explicit label; `true` means hallucinated.
    pub fn label(&self) -> Option<bool> {
        self.label
    }

    pub fn meta(&self) -> Option<&BTreeMap<String, String>> {
        self.meta.as_ref()
    }

    /// Shared response length `L`.
    pub fn len(&self) -> usize {
        self.multimodal.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_invalid_logprobs() {
        assert_eq!(
            TokenTrace::from_logprobs(vec![], Condition::Multimodal),
            Err(ValidationError::EmptyTrace)
        );
        assert_eq!(
            TokenTrace::from_logprobs(vec![-1.0, f64::NAN], Condition::Multimodal),
            Err(ValidationError::NonFiniteLogprob { index: 1 })
        );
        assert_eq!(
            TokenTrace::from_logprobs(vec![f64::NEG_INFINITY], Condition::Multimodal),
            Err(ValidationError::NonFiniteLogprob { index: 0 })
        );
        assert_eq!(
            TokenTrace::from_logprobs(vec![-1.0, 1e-9], Condition::TextOnly),
            Err(ValidationError::PositiveLogprob { index: 1, value: 1e-9 })
        );
    }

    #[test]
    fn accepts_forced_tokens() {
        let t = TokenTrace::from_logprobs(vec![0.0, -0.0], Condition::Multimodal).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn token_count_must_match() {
        let err = TokenTrace::new(vec!["a".into()], vec![-1.0, -2.0], Condition::Multimodal);
        assert_eq!(
            err,
            Err(ValidationError::TokenCountMismatch {
                tokens: 1,
                logprobs: 2
            })
        );
    }

    #[test]
    fn pair_checks_lengths_and_conditions() {
        let err = SamplePair::from_logprobs("s", vec![-1.0; 5], vec![-1.0; 4]).unwrap_err();
        assert_eq!(
            err,
            ValidationError::LengthMismatch {
                multimodal: 5,
                text_only: 4
            }
        );
        assert_eq!(err.to_string(), "length mismatch: multimodal=5 text_only=4");

        let mm = TokenTrace::from_logprobs(vec![-1.0], Condition::Multimodal).unwrap();
        let swapped = SamplePair::new("s", mm.clone(), mm);
        assert!(matches!(swapped, Err(ValidationError::WrongCondition { .. })));
    }

    #[test]
    fn green_score_range() {
        let p = SamplePair::from_logprobs("s", vec![-1.0], vec![-1.0]).unwrap();
        assert!(p.clone().with_green_score(Some(1.0)).is_ok());
        assert!(p.clone().with_green_score(Some(0.0)).is_ok());
        assert_eq!(
            p.clone().with_green_score(Some(1.5)),
            Err(ValidationError::GreenOutOfRange(1.5))
        );
        assert!(p.with_green_score(Some(f64::NAN)).is_err());
    }
}
