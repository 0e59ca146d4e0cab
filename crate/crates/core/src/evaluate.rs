//! Side-by-side detector comparison over a labeled corpus.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    self, aug, check_thresholds, green_label, missing_ids, roc_auc, LabeledScore, MetricsError,
    StabilityPoint, AUG_DEFINITION, DEFAULT_GREEN_THRESHOLD, DEFAULT_STABILITY_THRESHOLDS,
};
use crate::par;
use crate::scoring::{cebag_lambda_scores, score_corpus, Detector, DetectorScores, DEFAULT_LAMBDA_GRID};
use crate::trace::{validate_green, SamplePair, ValidationError};

pub const CEBAG_LAMBDA: &str = "cebag_lambda";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("sample {0} has neither a green score nor an explicit label")]
    MissingLabel(String),
    #[error("external scores do not cover the corpus: {}", describe_gaps(.0))]
    CoverageGaps(Vec<(String, Vec<String>)>),
    #[error("external detector name {0:?} collides with a built-in detector")]
    NameCollision(String),
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
    #[error("score list and ground truth disagree on sample ids (first: {0})")]
    MisalignedTruth(String),
    #[error("lambda grid is empty")]
    EmptyLambdaGrid,
}

fn describe_gaps(gaps: &[(String, Vec<String>)]) -> String {
    gaps.iter()
        .map(|(name, ids)| format!("{name} missing [{}]", ids.join(", ")))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Reference quality for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub sample_id: String,
    pub green_score: Option<f64>,
    pub label: Option<bool>,
}

impl GroundTruth {
    pub fn of(pair: &SamplePair) -> Self {
        Self {
            sample_id: pair.sample_id().to_owned(),
            green_score: pair.green_score(),
            label: pair.label(),
        }
    }

    /// A green score, when present, decides the label; otherwise the
    /// explicit label is used.
    pub fn label_at(&self, threshold: f64) -> Result<bool, EvalError> {
        match (self.green_score, self.label) {
            (Some(g), _) => {
                validate_green(g)?;
                Ok(green_label(g, threshold))
            }
            (None, Some(l)) => Ok(l),
            (None, None) => Err(EvalError::MissingLabel(self.sample_id.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub green_threshold: f64,
    pub stability_thresholds: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// Restrict the report to these detector names; `None` keeps all.
    pub detectors: Option<Vec<String>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            green_threshold: DEFAULT_GREEN_THRESHOLD,
            stability_thresholds: DEFAULT_STABILITY_THRESHOLDS.to_vec(),
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            detectors: None,
        }
    }
}

/// Exact settings a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub green_threshold: f64,
    pub stability_thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_lambda: Option<f64>,
    pub aug_definition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector_name: String,
    pub auc: f64,
    pub aug: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub stability: Vec<StabilityPoint>,
    pub config_echo: ConfigEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub auc: f64,
    pub aug: f64,
}

/// Evaluates the normalized variant at every grid value. Every point uses the
/// same labels.
pub fn lambda_sweep(
    scores: &[DetectorScores],
    labels: &[bool],
    grid: &[f64],
) -> Result<Vec<LambdaPoint>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyLambdaGrid);
    }
    let points = par::map_slice(grid, |&lambda| lambda_point(scores, labels, lambda));
    points.into_iter().collect()
}

pub fn lambda_sweep_sequential(
    scores: &[DetectorScores],
    labels: &[bool],
    grid: &[f64],
) -> Result<Vec<LambdaPoint>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyLambdaGrid);
    }
    grid.iter().map(|&l| lambda_point(scores, labels, l)).collect()
}

fn lambda_point(scores: &[DetectorScores], labels: &[bool], lambda: f64) -> Result<LambdaPoint, EvalError> {
    let combined = cebag_lambda_scores(scores, lambda)?;
    let items: Vec<LabeledScore> = combined
        .into_iter()
        .zip(labels)
        .map(|((id, s), &l)| LabeledScore::new(id, s, l))
        .collect();
    Ok(LambdaPoint {
        lambda,
        auc: roc_auc(&items)?,
        aug: aug(&items)?,
    })
}

/// Highest AUC; the earliest grid value wins ties.
pub fn best_lambda(points: &[LambdaPoint]) -> Option<&LambdaPoint> {
    points
        .iter()
        .fold(None, |best: Option<&LambdaPoint>, p| match best {
            Some(b) if b.auc >= p.auc => Some(b),
            _ => Some(p),
        })
}

/// One detector's scores in corpus order; the normalized variant also
/// carries its grid and chosen weight.
type Column = (String, Vec<f64>, Option<(Vec<f64>, f64)>);

/// Scores the corpus and evaluates every built-in and external detector.
pub fn compare_detectors(
    corpus: &[SamplePair],
    external: &BTreeMap<String, Vec<(String, f64)>>,
    config: &EvalConfig,
) -> Result<Vec<EvalReport>, EvalError> {
    let scores = score_corpus(corpus);
    let truth: Vec<GroundTruth> = corpus.iter().map(GroundTruth::of).collect();
    evaluate_scores(&scores, &truth, external, config)
}

/// Same as [`compare_detectors`] for precomputed scores. `truth` must list the
/// same sample ids in the same order as `scores`.
pub fn evaluate_scores(
    scores: &[DetectorScores],
    truth: &[GroundTruth],
    external: &BTreeMap<String, Vec<(String, f64)>>,
    config: &EvalConfig,
) -> Result<Vec<EvalReport>, EvalError> {
    if scores.is_empty() {
        return Err(ValidationError::EmptyCorpus.into());
    }
    if scores.len() != truth.len() {
        let first = scores
            .iter()
            .map(|s| s.sample_id.as_str())
            .find(|id| !truth.iter().any(|t| t.sample_id == *id))
            .or_else(|| truth.get(scores.len()).map(|t| t.sample_id.as_str()))
            .unwrap_or_default();
        return Err(EvalError::MisalignedTruth(first.to_owned()));
    }
    if let Some((s, _)) = scores.iter().zip(truth).find(|(s, t)| s.sample_id != t.sample_id) {
        return Err(EvalError::MisalignedTruth(s.sample_id.clone()));
    }
    metrics::check_thresholds(&[config.green_threshold])?;
    check_thresholds(&config.stability_thresholds)?;
    if config.lambda_grid.is_empty() {
        return Err(EvalError::EmptyLambdaGrid);
    }

    let builtin_names: BTreeSet<&str> = Detector::ALL
        .iter()
        .map(|d| d.name())
        .chain(std::iter::once(CEBAG_LAMBDA))
        .collect();
    for name in external.keys() {
        if builtin_names.contains(name.as_str()) {
            return Err(EvalError::NameCollision(name.clone()));
        }
    }
    let wanted: Option<BTreeSet<&str>> = match &config.detectors {
        Some(list) => {
            for name in list {
                if !builtin_names.contains(name.as_str()) && !external.contains_key(name) {
                    return Err(EvalError::UnknownDetector(name.clone()));
                }
            }
            Some(list.iter().map(String::as_str).collect())
        }
        None => None,
    };
    let include = |name: &str| wanted.as_ref().is_none_or(|w| w.contains(name));

    let labels: Vec<bool> = truth
        .iter()
        .map(|t| t.label_at(config.green_threshold))
        .collect::<Result<_, _>>()?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels {
            positives,
            negatives,
        }
        .into());
    }
    let green: Option<Vec<(String, f64)>> = truth
        .iter()
        .map(|t| t.green_score.map(|g| (t.sample_id.clone(), g)))
        .collect();

    let mut columns: Vec<Column> = Vec::new();
    for d in Detector::ALL {
        if include(d.name()) {
            columns.push((d.name().to_owned(), scores.iter().map(|s| s.get(d)).collect(), None));
        }
    }
    if include(CEBAG_LAMBDA) {
        let sweep = lambda_sweep(scores, &labels, &config.lambda_grid)?;
        let best = best_lambda(&sweep).expect("grid is non-empty").lambda;
        let values = cebag_lambda_scores(scores, best)?.into_iter().map(|(_, v)| v).collect();
        columns.push((CEBAG_LAMBDA.to_owned(), values, Some((config.lambda_grid.clone(), best))));
    }

    let ids: Vec<&str> = scores.iter().map(|s| s.sample_id.as_str()).collect();
    let mut gaps = Vec::new();
    for (name, list) in external {
        if !include(name) {
            continue;
        }
        let mut by_id = BTreeMap::new();
        for (id, v) in list {
            if by_id.insert(id.as_str(), *v).is_some() {
                return Err(MetricsError::DuplicateId(id.clone()).into());
            }
        }
        let present: BTreeSet<&str> = by_id.keys().copied().collect();
        let missing = missing_ids(ids.iter().copied(), &present);
        if !missing.is_empty() {
            gaps.push((name.clone(), missing));
            continue;
        }
        columns.push((name.clone(), ids.iter().map(|id| by_id[id]).collect(), None));
    }
    if !gaps.is_empty() {
        return Err(EvalError::CoverageGaps(gaps));
    }
    columns.sort_by(|a, b| a.0.cmp(&b.0));

    let reports = par::map_slice(&columns, |(name, values, lambda)| {
        let items: Vec<LabeledScore> = ids
            .iter()
            .zip(values)
            .zip(&labels)
            .map(|((id, &s), &l)| LabeledScore::new(*id, s, l))
            .collect();
        let stability = match &green {
            Some(g) => {
                let pairs: Vec<(String, f64)> = ids.iter().map(|id| id.to_string()).zip(values.iter().copied()).collect();
                metrics::stability_sweep(&pairs, g, &config.stability_thresholds)?
            }
            None => Vec::new(),
        };
        Ok::<_, EvalError>(EvalReport {
            detector_name: name.clone(),
            auc: roc_auc(&items)?,
            aug: aug(&items)?,
            n_positive: positives,
            n_negative: negatives,
            stability,
            config_echo: ConfigEcho {
                green_threshold: config.green_threshold,
                stability_thresholds: config.stability_thresholds.clone(),
                lambda_grid: lambda.as_ref().map(|(grid, _)| grid.clone()),
                best_lambda: lambda.as_ref().map(|(_, best)| *best),
                aug_definition: AUG_DEFINITION.to_owned(),
            },
        })
    });
    reports.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<SamplePair> {
        // Hallucinated samples carry spiky logprobs; clean ones are flat.
        let mut out = Vec::new();
        for i in 0..6 {
            let spread = 0.2 + i as f64 * 0.3;
            let mm = vec![-0.1, -0.1 - spread, -0.2, -0.1 - 2.0 * spread];
            let text: Vec<f64> = mm.iter().map(|v| v - 0.05 * i as f64).collect();
            let hallucinated = i >= 3;
            out.push(
                SamplePair::from_logprobs(format!("s{i}"), mm, text)
                    .unwrap()
                    .with_label(Some(hallucinated)),
            );
        }
        out
    }

    #[test]
    fn five_builtin_reports_sorted_by_name() {
        let reports = compare_detectors(&corpus(), &BTreeMap::new(), &EvalConfig::default()).unwrap();
        let names: Vec<&str> = reports.iter().map(|r| r.detector_name.as_str()).collect();
        assert_eq!(
            names,
            vec!["avgprob", "cebag", "cebag_lambda", "evidence_only", "sigma_only"]
        );
        for r in &reports {
            assert_eq!(r.n_positive + r.n_negative, 6);
            assert!(r.stability.is_empty(), "no green scores, no sweep");
        }
        let lambda = &reports[2];
        assert!(lambda.config_echo.best_lambda.is_some());
        assert!(lambda.auc >= reports[4].auc);
    }

    #[test]
    fn external_scores_are_evaluated_like_builtins() {
        let c = corpus();
        let sigma: Vec<(String, f64)> = score_corpus(&c).iter().map(|s| (s.sample_id.clone(), s.sigma)).collect();
        let mut external = BTreeMap::new();
        external.insert("vase".to_string(), sigma);
        let reports = compare_detectors(&c, &external, &EvalConfig::default()).unwrap();
        assert_eq!(reports.len(), 6);
        let vase = reports.iter().find(|r| r.detector_name == "vase").unwrap();
        let sigma_only = reports.iter().find(|r| r.detector_name == "sigma_only").unwrap();
        assert_eq!(vase.auc, sigma_only.auc);
        assert_eq!(vase.aug, sigma_only.aug);
    }

    #[test]
    fn coverage_gaps_are_listed_per_detector() {
        let c = corpus();
        let mut external = BTreeMap::new();
        external.insert("se".to_string(), vec![("s0".to_string(), 1.0)]);
        external.insert("radflag".to_string(), vec![]);
        let err = compare_detectors(&c, &external, &EvalConfig::default()).unwrap_err();
        match &err {
            EvalError::CoverageGaps(gaps) => {
                assert_eq!(gaps.len(), 2);
                assert_eq!(gaps[0].0, "radflag");
                assert_eq!(gaps[0].1.len(), 6);
                assert_eq!(gaps[1].1, vec!["s1", "s2", "s3", "s4", "s5"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn external_name_collision_is_rejected() {
        let mut external = BTreeMap::new();
        external.insert("cebag".to_string(), vec![]);
        assert_eq!(
            compare_detectors(&corpus(), &external, &EvalConfig::default()),
            Err(EvalError::NameCollision("cebag".into()))
        );
    }

    #[test]
    fn degenerate_labels_are_errors() {
        let c: Vec<SamplePair> = corpus()
            .into_iter()
            .map(|p| p.with_label(None).with_green_score(Some(1.0)).unwrap())
            .collect();
        let err = compare_detectors(&c, &BTreeMap::new(), &EvalConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no positive labels"));
    }

    #[test]
    fn missing_labels_are_errors() {
        let mut c = corpus();
        c[2] = c[2].clone().with_label(None);
        assert_eq!(
            compare_detectors(&c, &BTreeMap::new(), &EvalConfig::default()),
            Err(EvalError::MissingLabel("s2".into()))
        );
    }

    #[test]
    fn detector_filter() {
        let config = EvalConfig {
            detectors: Some(vec!["cebag".into(), "avgprob".into()]),
            ..EvalConfig::default()
        };
        let reports = compare_detectors(&corpus(), &BTreeMap::new(), &config).unwrap();
        assert_eq!(reports.len(), 2);
        let config = EvalConfig {
            detectors: Some(vec!["nope".into()]),
            ..EvalConfig::default()
        };
        assert_eq!(
            compare_detectors(&corpus(), &BTreeMap::new(), &config),
            Err(EvalError::UnknownDetector("nope".into()))
        );
    }

    #[test]
    fn best_lambda_prefers_earliest_on_ties() {
        let pts = vec![
            LambdaPoint { lambda: 0.0, auc: 0.8, aug: 0.5 },
            LambdaPoint { lambda: 0.5, auc: 0.9, aug: 0.5 },
            LambdaPoint { lambda: 1.0, auc: 0.9, aug: 0.6 },
        ];
        assert_eq!(best_lambda(&pts).unwrap().lambda, 0.5);
        assert!(best_lambda(&[]).is_none());
    }

    #[test]
    fn green_takes_precedence_over_label() {
        let t = GroundTruth {
            sample_id: "a".into(),
            green_score: Some(1.0),
            label: Some(true),
        };
        assert_eq!(t.label_at(1.0), Ok(false));
        let t = GroundTruth {
            sample_id: "a".into(),
            green_score: None,
            label: Some(true),
        };
        assert_eq!(t.label_at(1.0), Ok(true));
    }
}
