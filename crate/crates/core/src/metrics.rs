//! Detector evaluation metrics: ROC-AUC, AUG, GREEN-threshold labels and the
//! threshold stability sweep.
//!
//! AUG here is the area under the accuracy-rejection curve: samples are
//! rejected most-suspect first, accuracy is the clean fraction of what is
//! retained, and AUG is the mean of that accuracy over every rejection count
//! `k = 0..N-1`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::exact_sum;
use crate::par;

/// Default GREEN threshold below which a response counts as hallucinated.
pub const DEFAULT_GREEN_THRESHOLD: f64 = 1.0;

/// Default grid for the threshold stability sweep.
pub const DEFAULT_STABILITY_THRESHOLDS: [f64; 5] = [0.4, 0.5, 0.6, 0.7, 0.8];

pub const AUG_DEFINITION: &str =
    "AUG = mean retained accuracy over rejection counts k=0..N-1, most suspect rejected first, ties by sample_id";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("degenerate labels: {}", describe_degenerate(*.positives, *.negatives))]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("empty input")]
    Empty,
    #[error("non-finite score for sample {0}")]
    NonFiniteScore(String),
    #[error("green threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("thresholds must be strictly increasing")]
    ThresholdsNotIncreasing,
    #[error("green score {value} for sample {sample_id} outside [0, 1]")]
    GreenOutOfRange { sample_id: String, value: f64 },
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
    #[error(
        "sample id mismatch: missing from green list [{}], missing from score list [{}]",
        .missing_green.join(", "),
        .missing_scores.join(", ")
    )]
    IdMismatch {
        missing_green: Vec<String>,
        missing_scores: Vec<String>,
    },
}

fn describe_degenerate(positives: usize, negatives: usize) -> String {
    if positives == 0 {
        format!("no positive labels ({negatives} clean samples, 0 hallucinated)")
    } else {
        format!("no negative labels ({positives} hallucinated samples, 0 clean)")
    }
}

/// A detector score paired with ground truth. `label == true` means hallucinated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub sample_id: String,
    pub score: f64,
    pub label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_score: Option<f64>,
}

impl LabeledScore {
    pub fn new(sample_id: impl Into<String>, score: f64, label: bool) -> Self {
        Self {
            sample_id: sample_id.into(),
            score,
            label,
            green_score: None,
        }
    }
}

fn check_finite(items: &[LabeledScore]) -> Result<(), MetricsError> {
    match items.iter().find(|i| !i.score.is_finite()) {
        Some(bad) => Err(MetricsError::NonFiniteScore(bad.sample_id.clone())),
        None => Ok(()),
    }
}

fn class_counts(items: &[LabeledScore]) -> (usize, usize) {
    let positives = items.iter().filter(|i| i.label).count();
    (positives, items.len() - positives)
}

/// `P(pos > neg) + 0.5 * P(pos == neg)` from mid-rank statistics.
///
/// Rank sums are accumulated as doubled integers, so the result is the exact
/// rational `(2 * wins + ties) / (2 * P * N)` rounded once.
pub fn roc_auc(items: &[LabeledScore]) -> Result<f64, MetricsError> {
    check_finite(items)?;
    let (positives, negatives) = class_counts(items);
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[a]
            .score
            .partial_cmp(&items[b].score)
            .unwrap_or(Ordering::Equal)
    });

    // Twice the positive rank sum; mid-rank of a tie block [start, end) is (start + end + 1) / 2.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let score = items[order[start]].score;
        let mut end = start + 1;
        while end < order.len() && items[order[end]].score == score {
            end += 1;
        }
        let block_positives = order[start..end].iter().filter(|&&i| items[i].label).count() as u128;
        doubled_rank_sum += block_positives * (start + end + 1) as u128;
        start = end;
    }

    let p = positives as u128;
    let n = negatives as u128;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * p * n) as f64)
}

/// Area under the accuracy-rejection curve; see the module docs.
pub fn aug(items: &[LabeledScore]) -> Result<f64, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    check_finite(items)?;
    let mut order: Vec<&LabeledScore> = items.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });

    let n = order.len();
    let mut clean_retained = order.iter().filter(|i| !i.label).count();
    let mut accuracies = Vec::with_capacity(n);
    for (k, rejected) in order.iter().enumerate() {
        accuracies.push(clean_retained as f64 / (n - k) as f64);
        if !rejected.label {
            clean_retained -= 1;
        }
    }
    Ok(exact_sum(accuracies) / n as f64)
}

fn check_threshold(threshold: f64) -> Result<(), MetricsError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidThreshold(threshold))
    }
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<(), MetricsError> {
    for &t in thresholds {
        check_threshold(t)?;
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::ThresholdsNotIncreasing);
    }
    Ok(())
}

/// `true` (hallucinated) iff the green score is strictly below `threshold`.
pub fn green_label(green_score: f64, threshold: f64) -> bool {
    green_score < threshold
}

pub fn green_labels(
    green_scores: &[(String, f64)],
    threshold: f64,
) -> Result<Vec<(String, bool)>, MetricsError> {
    check_threshold(threshold)?;
    green_scores
        .iter()
        .map(|(id, g)| {
            if (0.0..=1.0).contains(g) {
                Ok((id.clone(), green_label(*g, threshold)))
            } else {
                Err(MetricsError::GreenOutOfRange {
                    sample_id: id.clone(),
                    value: *g,
                })
            }
        })
        .collect()
}

/// AUC at one GREEN threshold; `auc` is `None` when the labels are single-class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub threshold: f64,
    pub auc: Option<f64>,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl StabilityPoint {
    pub fn is_degenerate(&self) -> bool {
        self.auc.is_none()
    }
}

fn index_unique(entries: &[(String, f64)]) -> Result<BTreeMap<&str, f64>, MetricsError> {
    let mut map = BTreeMap::new();
    for (id, v) in entries {
        if map.insert(id.as_str(), *v).is_some() {
            return Err(MetricsError::DuplicateId(id.clone()));
        }
    }
    Ok(map)
}

/// Relabels at each threshold and recomputes ROC-AUC with the same scores.
pub fn stability_sweep(
    scores: &[(String, f64)],
    green: &[(String, f64)],
    thresholds: &[f64],
) -> Result<Vec<StabilityPoint>, MetricsError> {
    check_thresholds(thresholds)?;
    let score_map = index_unique(scores)?;
    let green_map = index_unique(green)?;
    let missing_green: Vec<String> = score_map
        .keys()
        .filter(|id| !green_map.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    let missing_scores: Vec<String> = green_map
        .keys()
        .filter(|id| !score_map.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    if !missing_green.is_empty() || !missing_scores.is_empty() {
        return Err(MetricsError::IdMismatch {
            missing_green,
            missing_scores,
        });
    }
    for (id, g) in green {
        if !(0.0..=1.0).contains(g) {
            return Err(MetricsError::GreenOutOfRange {
                sample_id: id.clone(),
                value: *g,
            });
        }
    }

    let base: Vec<(String, f64, f64)> = scores
        .iter()
        .map(|(id, s)| (id.clone(), *s, green_map[id.as_str()]))
        .collect();

    let points = par::map_slice(thresholds, |&threshold| {
        let items: Vec<LabeledScore> = base
            .iter()
            .map(|(id, s, g)| LabeledScore {
                sample_id: id.clone(),
                score: *s,
                label: green_label(*g, threshold),
                green_score: Some(*g),
            })
            .collect();
        let (n_positive, n_negative) = class_counts(&items);
        match roc_auc(&items) {
            Ok(auc) => Ok(StabilityPoint {
                threshold,
                auc: Some(auc),
                n_positive,
                n_negative,
            }),
            Err(MetricsError::DegenerateLabels { .. }) => Ok(StabilityPoint {
                threshold,
                auc: None,
                n_positive,
                n_negative,
            }),
            Err(e) => Err(e),
        }
    });
    points.into_iter().collect()
}

/// Largest minus smallest AUC over the non-degenerate points.
pub fn stability_spread(points: &[StabilityPoint]) -> Option<f64> {
    let aucs: Vec<f64> = points.iter().filter_map(|p| p.auc).collect();
    let lo = aucs.iter().copied().reduce(f64::min)?;
    let hi = aucs.iter().copied().reduce(f64::max)?;
    Some(hi - lo)
}

/// Ids from `wanted` that are absent from `present`.
pub(crate) fn missing_ids<'a>(wanted: impl IntoIterator<Item = &'a str>, present: &BTreeSet<&str>) -> Vec<String> {
    wanted
        .into_iter()
        .filter(|id| !present.contains(id))
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(pos: &[f64], neg: &[f64]) -> Vec<LabeledScore> {
        pos.iter()
            .enumerate()
            .map(|(i, &s)| LabeledScore::new(format!("p{i}"), s, true))
            .chain(
                neg.iter()
                    .enumerate()
                    .map(|(i, &s)| LabeledScore::new(format!("n{i}"), s, false)),
            )
            .collect()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&items(&[5.0, 4.0], &[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(roc_auc(&items(&[2.0, 2.0], &[2.0, 2.0, 2.0])).unwrap(), 0.5);
        assert_eq!(roc_auc(&items(&[3.0, 1.0], &[2.0, 0.0])).unwrap(), 0.75);
        assert_eq!(roc_auc(&items(&[1.0], &[1.0])).unwrap(), 0.5);
    }

    #[test]
    fn auc_signed_zero_ties() {
        assert_eq!(roc_auc(&items(&[0.0], &[-0.0])).unwrap(), 0.5);
    }

    #[test]
    fn auc_rejects_single_class() {
        let err = roc_auc(&items(&[1.0, 2.0], &[])).unwrap_err();
        assert_eq!(
            err,
            MetricsError::DegenerateLabels {
                positives: 2,
                negatives: 0
            }
        );
        assert!(err.to_string().contains("no negative labels"));
        let err = roc_auc(&items(&[], &[1.0])).unwrap_err();
        assert!(err.to_string().contains("no positive labels"));
        assert!(matches!(
            roc_auc(&items(&[f64::NAN], &[1.0])),
            Err(MetricsError::NonFiniteScore(_))
        ));
    }

    #[test]
    fn aug_examples() {
        assert_eq!(aug(&items(&[], &[0.3, 0.2, 0.9])).unwrap(), 1.0);
        assert_eq!(aug(&items(&[0.3, 0.2, 0.9], &[])).unwrap(), 0.0);
        assert_eq!(aug(&items(&[2.0], &[1.0])).unwrap(), 0.75);
        assert_eq!(aug(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn aug_tie_break_is_by_sample_id() {
        // "a" (hallucinated) is rejected before "b" (clean) on a tie.
        let a_first = vec![
            LabeledScore::new("a", 1.0, true),
            LabeledScore::new("b", 1.0, false),
        ];
        assert_eq!(aug(&a_first).unwrap(), 0.75);
        let b_first = vec![
            LabeledScore::new("b", 1.0, true),
            LabeledScore::new("a", 1.0, false),
        ];
        assert_eq!(aug(&b_first).unwrap(), 0.25);
    }

    #[test]
    fn green_label_examples() {
        let g = vec![
            ("a".to_string(), 1.0),
            ("b".to_string(), 0.0),
            ("c".to_string(), 0.5),
        ];
        let at_one = green_labels(&g, 1.0).unwrap();
        assert!(!at_one[0].1);
        assert!(at_one[1].1);
        let at_04 = green_labels(&g, 0.4).unwrap();
        assert!(!at_04[2].1);
        assert!(at_04[1].1);

        assert_eq!(green_labels(&g, 0.0), Err(MetricsError::InvalidThreshold(0.0)));
        assert!(green_labels(&g, 1.1).is_err());
        let bad = vec![("x".to_string(), 1.2)];
        assert!(matches!(
            green_labels(&bad, 1.0),
            Err(MetricsError::GreenOutOfRange { .. })
        ));
    }

    #[test]
    fn sweep_perfect_monotone_detector() {
        // Score decreases as quality increases.
        let green: Vec<(String, f64)> = (0..20).map(|i| (format!("s{i:02}"), i as f64 / 19.0)).collect();
        let scores: Vec<(String, f64)> = green.iter().map(|(id, g)| (id.clone(), 1.0 - g)).collect();
        let points = stability_sweep(&scores, &green, &DEFAULT_STABILITY_THRESHOLDS).unwrap();
        assert_eq!(points.len(), 5);
        for p in &points {
            assert_eq!(p.auc, Some(1.0));
        }
        assert_eq!(stability_spread(&points), Some(0.0));
    }

    #[test]
    fn sweep_all_high_green_is_degenerate() {
        let green: Vec<(String, f64)> = (0..6).map(|i| (format!("s{i}"), 0.9 + i as f64 * 0.01)).collect();
        let scores: Vec<(String, f64)> = green.iter().map(|(id, _)| (id.clone(), 0.5)).collect();
        let points = stability_sweep(&scores, &green, &DEFAULT_STABILITY_THRESHOLDS).unwrap();
        assert!(points.iter().all(StabilityPoint::is_degenerate));
        assert_eq!(stability_spread(&points), None);
    }

    #[test]
    fn sweep_reports_missing_ids() {
        let scores = vec![("a".to_string(), 1.0), ("b".to_string(), 2.0)];
        let green = vec![("a".to_string(), 0.1), ("c".to_string(), 0.9)];
        let err = stability_sweep(&scores, &green, &[0.5]).unwrap_err();
        assert_eq!(
            err,
            MetricsError::IdMismatch {
                missing_green: vec!["b".into()],
                missing_scores: vec!["c".into()],
            }
        );
        assert!(err.to_string().contains("missing from green list [b]"));
    }

    #[test]
    fn sweep_rejects_unordered_grid() {
        let s = vec![("a".to_string(), 1.0)];
        assert_eq!(
            stability_sweep(&s, &s, &[0.5, 0.5]),
            Err(MetricsError::ThresholdsNotIncreasing)
        );
        assert_eq!(
            stability_sweep(&s, &s, &[0.0, 0.5]),
            Err(MetricsError::InvalidThreshold(0.0))
        );
    }
}
