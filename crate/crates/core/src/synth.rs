//! Seeded synthetic corpora with controlled grounded/hallucinated statistics.
//!
//! The generator is a stylized model, not an MLLM simulator:
//!
//! * Per-token image-conditioned logprobs are Gaussian, clamped at 0.
//! * Grounded samples use `grounded_params.logprob_std` directly.
//!   Hallucinated samples scale it by `0.5 + severity`, where `severity` is a
//!   per-sample uniform draw in `[0, 1)`.
//! * Each text-only logprob is the image-conditioned one minus a per-token
//!   gain `gain_per_token_mean * (1 + 0.25 * w)` with standard normal `w`,
//!   again clamped at 0.
//! * Exactly `round((1 - green_coupling) * n)` samples of each class get a
//!   green score that disagrees with their class. Samples whose green score
//!   marks them as low quality get `0.9 * (1 - severity)`; the others get 1.0.
//!
//! The random stream is ChaCha8 seeded from `seed`. Per sample it draws, in
//! order: the length, the severity, then `(z, w)` for each token. The draw
//! count never depends on the class parameters, so changing a mean or a
//! standard deviation leaves every other sample's noise untouched. The
//! label-flip selection happens after all samples are drawn.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::SamplePair;

/// Scale applied to the per-token gain jitter.
const GAIN_JITTER: f64 = 0.25;
/// Green scores of low-quality samples lie in `(0, LOW_GREEN_MAX]`.
const LOW_GREEN_MAX: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec, field {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("unknown preset {0:?} (known: separable, hard, label-noise)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    pub logprob_mean: f64,
    pub logprob_std: f64,
    pub gain_per_token_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_grounded: usize,
    pub n_hallucinated: usize,
    /// Inclusive token-count range.
    pub length_range: (usize, usize),
    pub grounded_params: ClassParams,
    pub hallucinated_params: ClassParams,
    /// Fraction of samples whose green score agrees with their class.
    pub green_coupling: f64,
}

pub const PRESETS: [&str; 3] = ["separable", "hard", "label-noise"];

impl SyntheticSpec {
    /// Grounded answers are flat and image-sensitive; hallucinated ones are
    /// spiky and barely move when the image is removed.
    pub fn separable() -> Self {
        Self {
            seed: 20_240_601,
            n_grounded: 100,
            n_hallucinated: 100,
            length_range: (8, 40),
            grounded_params: ClassParams {
                logprob_mean: -0.6,
                logprob_std: 0.2,
                gain_per_token_mean: 0.5,
            },
            hallucinated_params: ClassParams {
                logprob_mean: -0.7,
                logprob_std: 1.0,
                gain_per_token_mean: 0.02,
            },
            green_coupling: 1.0,
        }
    }

    /// Overlapping classes.
    pub fn hard() -> Self {
        Self {
            seed: 20_240_602,
            grounded_params: ClassParams {
                logprob_mean: -0.7,
                logprob_std: 0.5,
                gain_per_token_mean: 0.15,
            },
            hallucinated_params: ClassParams {
                logprob_mean: -0.7,
                logprob_std: 0.65,
                gain_per_token_mean: 0.05,
            },
            ..Self::separable()
        }
    }

    /// Separable statistics with 20% of green scores disagreeing with the class.
    pub fn label_noise() -> Self {
        Self {
            seed: 20_240_603,
            green_coupling: 0.8,
            ..Self::separable()
        }
    }

    pub fn preset(name: &str) -> Result<Self, SynthError> {
        match name {
            "separable" => Ok(Self::separable()),
            "hard" => Ok(Self::hard()),
            "label-noise" => Ok(Self::label_noise()),
            other => Err(SynthError::UnknownPreset(other.to_owned())),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |field, reason: &str| {
            Err(SynthError::InvalidSpec {
                field,
                reason: reason.to_owned(),
            })
        };
        if self.n_grounded == 0 {
            return invalid("n_grounded", "must be at least 1");
        }
        if self.n_hallucinated == 0 {
            return invalid("n_hallucinated", "must be at least 1");
        }
        let (lo, hi) = self.length_range;
        if lo == 0 {
            return invalid("length_range", "minimum length must be at least 1");
        }
        if lo > hi {
            return invalid("length_range", "minimum exceeds maximum");
        }
        if !(0.0..=1.0).contains(&self.green_coupling) {
            return invalid("green_coupling", "must lie in [0, 1]");
        }
        for (field, p) in [
            ("grounded_params", &self.grounded_params),
            ("hallucinated_params", &self.hallucinated_params),
        ] {
            if !p.logprob_mean.is_finite() || p.logprob_mean > 0.0 {
                return invalid(field, "logprob_mean must be finite and <= 0");
            }
            if !p.logprob_std.is_finite() || p.logprob_std < 0.0 {
                return invalid(field, "logprob_std must be finite and >= 0");
            }
            if !p.gain_per_token_mean.is_finite() {
                return invalid(field, "gain_per_token_mean must be finite");
            }
        }
        Ok(())
    }
}

struct Draw {
    length: usize,
    severity: f64,
    z: Vec<f64>,
    w: Vec<f64>,
}

fn draw_sample(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> Draw {
    let length = rng.random_range(lo..=hi);
    let severity: f64 = rng.random();
    let mut z = Vec::with_capacity(length);
    let mut w = Vec::with_capacity(length);
    for _ in 0..length {
        z.push(rng.sample(StandardNormal));
        w.push(rng.sample(StandardNormal));
    }
    Draw { length, severity, z, w }
}

fn build_traces(draw: &Draw, params: &ClassParams, std_scale: f64) -> (Vec<f64>, Vec<f64>) {
    let std = params.logprob_std * std_scale;
    let mut mm = Vec::with_capacity(draw.length);
    let mut text = Vec::with_capacity(draw.length);
    for (z, w) in draw.z.iter().zip(&draw.w) {
        let lp = (params.logprob_mean + std * z).min(0.0);
        let gain = params.gain_per_token_mean * (1.0 + GAIN_JITTER * w);
        mm.push(lp);
        text.push((lp - gain).min(0.0));
    }
    (mm, text)
}

/// Generates a labeled corpus: grounded samples first (`g-00000`, ...), then
/// hallucinated ones (`h-00000`, ...). Deterministic in `spec`.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<Vec<SamplePair>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut drawn = Vec::with_capacity(spec.n_grounded + spec.n_hallucinated);
    for _ in 0..spec.n_grounded {
        drawn.push((false, draw_sample(&mut rng, spec.length_range)));
    }
    for _ in 0..spec.n_hallucinated {
        drawn.push((true, draw_sample(&mut rng, spec.length_range)));
    }

    let flips_of = |n: usize| ((1.0 - spec.green_coupling) * n as f64).round() as usize;
    let mut flipped = vec![false; drawn.len()];
    for i in sample_indices(&mut rng, spec.n_grounded, flips_of(spec.n_grounded)) {
        flipped[i] = true;
    }
    for i in sample_indices(&mut rng, spec.n_hallucinated, flips_of(spec.n_hallucinated)) {
        flipped[spec.n_grounded + i] = true;
    }

    let mut out = Vec::with_capacity(drawn.len());
    let (mut g_idx, mut h_idx) = (0, 0);
    for ((hallucinated, draw), flip) in drawn.iter().zip(flipped) {
        let (params, std_scale, id) = if *hallucinated {
            h_idx += 1;
            (&spec.hallucinated_params, 0.5 + draw.severity, format!("h-{:05}", h_idx - 1))
        } else {
            g_idx += 1;
            (&spec.grounded_params, 1.0, format!("g-{:05}", g_idx - 1))
        };
        let (mm, text) = build_traces(draw, params, std_scale);
        let low_quality = *hallucinated != flip;
        let green = if low_quality {
            LOW_GREEN_MAX * (1.0 - draw.severity)
        } else {
            1.0
        };
        let pair = SamplePair::from_logprobs(id, mm, text)
            .and_then(|p| p.with_green_score(Some(green)))
            .expect("clamped finite logprobs always validate");
        out.push(pair.with_label(Some(*hallucinated)));
    }
    Ok(out)
}
