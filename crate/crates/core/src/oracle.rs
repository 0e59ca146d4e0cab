//! Brute-force oracles: a finite joint distribution over (image, response)
//! on which the evidence gain can be checked against the image-response PMI,
//! and an O(P*N) pairwise AUC.
//!
//! The question conditioning is dropped from the discrete model. Conditioning
//! every table on one fixed question leaves the identity unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{LabeledScore, MetricsError};
use crate::numeric::exact_sum;
use crate::par;

/// Allowed deviation of the table's total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Maximum |gain - pmi| accepted by the trial runner.
pub const PMI_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("joint table has {found} entries, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("joint table must have at least one image and one response")]
    EmptyTable,
    #[error("entry ({image}, {response}) = {value} is negative or non-finite")]
    BadEntry { image: usize, response: usize, value: f64 },
    #[error("total mass {0} differs from 1 by more than 1e-12")]
    Mass(f64),
    #[error("marginal of {axis} {index} is zero")]
    ZeroMarginal { axis: &'static str, index: usize },
    #[error("cell ({image}, {response}) is outside the table")]
    OutOfRange { image: usize, response: usize },
    #[error("cell ({image}, {response}) has zero mass")]
    ZeroMass { image: usize, response: usize },
    #[error("table size must be at least 1")]
    ZeroSize,
}

/// A probability table `P(image, response)`, row-major by image.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBayesModel {
    n_images: usize,
    n_responses: usize,
    joint: Vec<f64>,
    image_marginals: Vec<f64>,
    response_marginals: Vec<f64>,
}

impl DiscreteBayesModel {
    pub fn new(n_images: usize, n_responses: usize, joint: Vec<f64>) -> Result<Self, OracleError> {
        if n_images == 0 || n_responses == 0 {
            return Err(OracleError::EmptyTable);
        }
        if joint.len() != n_images * n_responses {
            return Err(OracleError::Shape {
                expected: n_images * n_responses,
                found: joint.len(),
            });
        }
        for (k, &value) in joint.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(OracleError::BadEntry {
                    image: k / n_responses,
                    response: k % n_responses,
                    value,
                });
            }
        }
        let total = exact_sum(joint.iter().copied());
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(OracleError::Mass(total));
        }
        let image_marginals: Vec<f64> = (0..n_images)
            .map(|i| exact_sum(joint[i * n_responses..(i + 1) * n_responses].iter().copied()))
            .collect();
        let response_marginals: Vec<f64> = (0..n_responses)
            .map(|r| exact_sum((0..n_images).map(|i| joint[i * n_responses + r])))
            .collect();
        if let Some(index) = image_marginals.iter().position(|&m| m <= 0.0) {
            return Err(OracleError::ZeroMarginal { axis: "image", index });
        }
        if let Some(index) = response_marginals.iter().position(|&m| m <= 0.0) {
            return Err(OracleError::ZeroMarginal {
                axis: "response",
                index,
            });
        }
        Ok(Self {
            n_images,
            n_responses,
            joint,
            image_marginals,
            response_marginals,
        })
    }

    /// Product of two marginals: image and response are independent.
    pub fn independent(images: &[f64], responses: &[f64]) -> Result<Self, OracleError> {
        let joint = images
            .iter()
            .flat_map(|pi| responses.iter().map(move |pr| pi * pr))
            .collect();
        Self::new(images.len(), responses.len(), joint)
    }

    /// `k` images, `k` responses, response `i` occurs exactly with image `i`.
    pub fn diagonal(k: usize) -> Result<Self, OracleError> {
        if k == 0 {
            return Err(OracleError::ZeroSize);
        }
        let mut joint = vec![0.0; k * k];
        for i in 0..k {
            joint[i * k + i] = 1.0 / k as f64;
        }
        Self::new(k, k, joint)
    }

    /// Strictly positive random table, normalized to unit mass.
    pub fn random_positive<R: Rng>(n_images: usize, n_responses: usize, rng: &mut R) -> Result<Self, OracleError> {
        if n_images == 0 || n_responses == 0 {
            return Err(OracleError::ZeroSize);
        }
        // Offset keeps every cell well away from zero.
        let raw: Vec<f64> = (0..n_images * n_responses)
            .map(|_| 0.01 + rng.random::<f64>())
            .collect();
        let total = exact_sum(raw.iter().copied());
        Self::new(n_images, n_responses, raw.into_iter().map(|v| v / total).collect())
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn n_responses(&self) -> usize {
        self.n_responses
    }

    pub fn joint(&self, image: usize, response: usize) -> f64 {
        self.joint[image * self.n_responses + response]
    }

    pub fn image_marginal(&self, image: usize) -> f64 {
        self.image_marginals[image]
    }

    pub fn response_marginal(&self, response: usize) -> f64 {
        self.response_marginals[response]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmiCheck {
    /// `log P(response | image) - log P(response)`.
    pub gain: f64,
    /// `log P(image | response) - log P(image)`.
    pub pmi: f64,
}

impl PmiCheck {
    pub fn deviation(&self) -> f64 {
        (self.gain - self.pmi).abs()
    }
}

/// Computes the evidence gain and the PMI of one cell by two independent routes.
pub fn pmi_check(model: &DiscreteBayesModel, image: usize, response: usize) -> Result<PmiCheck, OracleError> {
    if image >= model.n_images || response >= model.n_responses {
        return Err(OracleError::OutOfRange { image, response });
    }
    let joint = model.joint(image, response);
    if joint <= 0.0 {
        return Err(OracleError::ZeroMass { image, response });
    }
    let p_image = model.image_marginal(image);
    let p_response = model.response_marginal(response);
    let response_given_image = joint / p_image;
    let image_given_response = joint / p_response;
    Ok(PmiCheck {
        gain: response_given_image.ln() - p_response.ln(),
        pmi: image_given_response.ln() - p_image.ln(),
    })
}

/// Settings for a batch of random PMI identity checks.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiTrials {
    /// Each table has between 1 and `max_size` rows and columns.
    pub max_size: usize,
    pub trials: usize,
    pub seed: u64,
    /// Added to the PMI route before comparing. Zero except in negative-control runs.
    pub pmi_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiSummary {
    pub trials: usize,
    pub cells_checked: usize,
    pub max_abs_diff: f64,
    /// `(trial, image, response)` of the largest deviation.
    pub worst_cell: Option<(usize, usize, usize)>,
    pub tolerance: f64,
}

impl PmiSummary {
    pub fn passed(&self) -> bool {
        self.max_abs_diff <= self.tolerance
    }
}

fn run_trial(cfg: &PmiTrials, trial: usize) -> Result<(usize, f64, (usize, usize)), OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let n_images = rng.random_range(1..=cfg.max_size);
    let n_responses = rng.random_range(1..=cfg.max_size);
    let model = DiscreteBayesModel::random_positive(n_images, n_responses, &mut rng)?;
    let mut worst = (0.0f64, (0, 0));
    for i in 0..n_images {
        for r in 0..n_responses {
            let mut check = pmi_check(&model, i, r)?;
            check.pmi += cfg.pmi_offset;
            let d = check.deviation();
            if d > worst.0 {
                worst = (d, (i, r));
            }
        }
    }
    Ok((n_images * n_responses, worst.0, worst.1))
}

/// Runs independent random-table trials. Trial `t` uses ChaCha8 stream `t`
/// of `seed`, so results do not depend on scheduling.
pub fn run_pmi_trials(cfg: &PmiTrials) -> Result<PmiSummary, OracleError> {
    if cfg.max_size == 0 {
        return Err(OracleError::ZeroSize);
    }
    let results = par::map_range(cfg.trials, |t| run_trial(cfg, t));
    let mut summary = PmiSummary {
        trials: cfg.trials,
        cells_checked: 0,
        max_abs_diff: 0.0,
        worst_cell: None,
        tolerance: PMI_TOLERANCE,
    };
    for (t, result) in results.into_iter().enumerate() {
        let (cells, diff, (i, r)) = result?;
        summary.cells_checked += cells;
        if summary.worst_cell.is_none() || diff > summary.max_abs_diff {
            summary.max_abs_diff = diff;
            summary.worst_cell = Some((t, i, r));
        }
    }
    Ok(summary)
}

/// Pairwise AUC: every positive against every negative, ties count half.
pub fn brute_force_auc(items: &[LabeledScore]) -> Result<f64, MetricsError> {
    let positives: Vec<f64> = items.iter().filter(|i| i.label).map(|i| i.score).collect();
    let negatives: Vec<f64> = items.iter().filter(|i| !i.label).map(|i| i.score).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(MetricsError::DegenerateLabels {
            positives: positives.len(),
            negatives: negatives.len(),
        });
    }
    let mut doubled_wins: u128 = 0;
    for p in &positives {
        for n in &negatives {
            if p > n {
                doubled_wins += 2;
            } else if p == n {
                doubled_wins += 1;
            }
        }
    }
    let pairs = (positives.len() * negatives.len()) as u128;
    Ok(doubled_wins as f64 / (2 * pairs) as f64)
}
