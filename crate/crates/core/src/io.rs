//! Line-delimited JSON persistence for corpora, scores and external score
//! lists.
//!
//! Each corpus line is one [`TraceRecord`]. Writers emit fields in a fixed
//! order with shortest round-trip float formatting, so identical input
//! always yields identical bytes and `read(write(x)) == x`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::GroundTruth;
use crate::scoring::DetectorScores;
use crate::trace::{Condition, SamplePair, TokenTrace, ValidationError};

pub const SCHEMA_VERSION: u32 = 1;

/// One generated answer scored with and without the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub sample_id: String,
    pub tokens: Vec<String>,
    #[serde(deserialize_with = "lenient_logprobs")]
    pub logprobs_mm: Vec<f64>,
    #[serde(deserialize_with = "lenient_logprobs")]
    pub logprobs_text: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

impl TraceRecord {
    pub fn from_pair(pair: &SamplePair) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            sample_id: pair.sample_id().to_owned(),
            tokens: pair.multimodal().tokens().to_vec(),
            logprobs_mm: pair.multimodal().logprobs().to_vec(),
            logprobs_text: pair.text_only().logprobs().to_vec(),
            green_score: pair.green_score(),
            label: pair.label(),
            meta: pair.meta().cloned(),
        }
    }

    /// Checks every record invariant except id uniqueness.
    pub fn validate(&self) -> Result<(), RecordErrorKind> {
        use RecordErrorKind as K;
        if self.schema_version != SCHEMA_VERSION {
            return Err(K::UnknownSchemaVersion(self.schema_version));
        }
        let (t, m, x) = (self.tokens.len(), self.logprobs_mm.len(), self.logprobs_text.len());
        if t == 0 && m == 0 && x == 0 {
            return Err(K::EmptyTrace);
        }
        if m != x {
            return Err(K::LengthMismatch {
                field: "logprobs_text",
                detail: format!("logprobs_mm has {m} entries, logprobs_text has {x}"),
            });
        }
        if t != m {
            return Err(K::LengthMismatch {
                field: "tokens",
                detail: format!("tokens has {t} entries, logprobs_mm has {m}"),
            });
        }
        for (name, values) in [("logprobs_mm", &self.logprobs_mm), ("logprobs_text", &self.logprobs_text)] {
            for (i, &v) in values.iter().enumerate() {
                if !v.is_finite() {
                    return Err(K::NonFiniteLogprob {
                        field: format!("{name}[{i}]"),
                    });
                }
                if v > 0.0 {
                    return Err(K::PositiveLogprob {
                        field: format!("{name}[{i}]"),
                        value: v,
                    });
                }
            }
        }
        if let Some(g) = self.green_score {
            if !(0.0..=1.0).contains(&g) {
                return Err(K::GreenOutOfRange(g));
            }
        }
        Ok(())
    }

    pub fn into_pair(self) -> Result<SamplePair, ValidationError> {
        let mm = TokenTrace::new(self.tokens.clone(), self.logprobs_mm, Condition::Multimodal)?;
        let text = TokenTrace::new(self.tokens, self.logprobs_text, Condition::TextOnly)?;
        Ok(SamplePair::new(self.sample_id, mm, text)?
            .with_green_score(self.green_score)?
            .with_label(self.label)
            .with_meta(self.meta))
    }

    /// Canonical single-line JSON, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records with finite floats always serialize")
    }
}

/// Accepts JSON numbers plus the string spellings `"NaN"`, `"Infinity"` and
/// `"-Infinity"`, so that non-finite values surface as a validation error
/// with a field path instead of a generic parse failure.
fn lenient_logprobs<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
    struct Lenient(f64);

    impl<'de> Deserialize<'de> for Lenient {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct V;
            impl Visitor<'_> for V {
                type Value = Lenient;
                fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                    f.write_str("a number")
                }
                fn visit_f64<E: de::Error>(self, v: f64) -> Result<Lenient, E> {
                    Ok(Lenient(v))
                }
                fn visit_i64<E: de::Error>(self, v: i64) -> Result<Lenient, E> {
                    Ok(Lenient(v as f64))
                }
                fn visit_u64<E: de::Error>(self, v: u64) -> Result<Lenient, E> {
                    Ok(Lenient(v as f64))
                }
                fn visit_str<E: de::Error>(self, v: &str) -> Result<Lenient, E> {
                    match v {
                        "NaN" | "nan" => Ok(Lenient(f64::NAN)),
                        "Infinity" | "inf" => Ok(Lenient(f64::INFINITY)),
                        "-Infinity" | "-inf" => Ok(Lenient(f64::NEG_INFINITY)),
                        _ => Err(E::invalid_type(de::Unexpected::Str(v), &self)),
                    }
                }
            }
            d.deserialize_any(V)
        }
    }

    struct SeqV;
    impl<'de> Visitor<'de> for SeqV {
        type Value = Vec<f64>;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an array of numbers")
        }
        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
            let mut out = Vec::with_capacity(seq.size_hint().unwrap_or(0));
            while let Some(Lenient(v)) = seq.next_element()? {
                out.push(v);
            }
            Ok(out)
        }
    }
    deserializer.deserialize_seq(SeqV)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordErrorKind {
    #[error("invalid UTF-8")]
    Utf8,
    #[error("malformed record, field {path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error("unknown schema_version {0}, field schema_version")]
    UnknownSchemaVersion(u32),
    #[error("empty trace, field tokens: at least one token is required")]
    EmptyTrace,
    #[error("length mismatch, field {field}: {detail}")]
    LengthMismatch { field: &'static str, detail: String },
    #[error("non-finite logprob, field {field}")]
    NonFiniteLogprob { field: String },
    #[error("positive logprob, field {field}: {value}")]
    PositiveLogprob { field: String, value: f64 },
    #[error("green score out of range, field green_score: {0}")]
    GreenOutOfRange(f64),
    #[error("non-finite score, field {0}")]
    NonFiniteScore(String),
    #[error("invalid length, field length: must be at least 1")]
    ZeroLength,
    #[error("duplicate sample_id {id:?}, field sample_id: first seen at line {first_line}")]
    DuplicateId { id: String, first_line: usize },
}

impl RecordErrorKind {
    /// Short stable name of the failure class.
    pub fn class(&self) -> &'static str {
        match self {
            Self::Utf8 => "invalid UTF-8",
            Self::Malformed { .. } => "malformed record",
            Self::UnknownSchemaVersion(_) => "unknown schema_version",
            Self::EmptyTrace => "empty trace",
            Self::LengthMismatch { .. } => "length mismatch",
            Self::NonFiniteLogprob { .. } => "non-finite logprob",
            Self::PositiveLogprob { .. } => "positive logprob",
            Self::GreenOutOfRange(_) => "green score out of range",
            Self::NonFiniteScore(_) => "non-finite score",
            Self::ZeroLength => "invalid length",
            Self::DuplicateId { .. } => "duplicate sample_id",
        }
    }
}

/// A rejected line: `<class> at line <n>, <detail>`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} at line {line}: {kind}", kind.class())]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Record(#[from] RecordError),
}

impl CorpusError {
    pub fn record(&self) -> Option<&RecordError> {
        match self {
            CorpusError::Record(r) => Some(r),
            CorpusError::Io(_) => None,
        }
    }
}

/// Iterates non-blank lines with their 1-based line numbers.
fn for_each_line<R: Read>(
    source: R,
    mut f: impl FnMut(usize, &str) -> Result<(), RecordErrorKind>,
) -> Result<(), CorpusError> {
    let mut reader = BufReader::new(source);
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        line_no += 1;
        let text = std::str::from_utf8(&buf).map_err(|_| RecordError {
            line: line_no,
            kind: RecordErrorKind::Utf8,
        })?;
        let text = text.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            continue;
        }
        f(line_no, text).map_err(|kind| RecordError { line: line_no, kind })?;
    }
}

fn parse_line<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, RecordErrorKind> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        RecordErrorKind::Malformed {
            path,
            detail: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| RecordErrorKind::Malformed {
        path: ".".into(),
        detail: e.to_string(),
    })?;
    Ok(value)
}

struct IdTracker(HashMap<String, usize>);

impl IdTracker {
    fn new() -> Self {
        Self(HashMap::new())
    }

    fn admit(&mut self, id: &str, line: usize) -> Result<(), RecordErrorKind> {
        if let Some(&first_line) = self.0.get(id) {
            return Err(RecordErrorKind::DuplicateId {
                id: id.to_owned(),
                first_line,
            });
        }
        self.0.insert(id.to_owned(), line);
        Ok(())
    }
}

/// Reads and validates raw records in file order.
pub fn read_records<R: Read>(source: R) -> Result<Vec<TraceRecord>, CorpusError> {
    let mut ids = IdTracker::new();
    let mut out = Vec::new();
    for_each_line(source, |line, text| {
        let record: TraceRecord = parse_line(text)?;
        record.validate()?;
        ids.admit(&record.sample_id, line)?;
        out.push(record);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_corpus<R: Read>(source: R) -> Result<Vec<SamplePair>, CorpusError> {
    Ok(read_records(source)?
        .into_iter()
        .map(|r| r.into_pair().expect("validated record converts"))
        .collect())
}

pub fn write_records<W: Write>(records: &[TraceRecord], mut sink: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut sink, r)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub fn write_corpus<W: Write>(pairs: &[SamplePair], sink: W) -> io::Result<()> {
    let records: Vec<TraceRecord> = pairs.iter().map(TraceRecord::from_pair).collect();
    write_records(&records, sink)
}

pub fn write_scores<W: Write>(scores: &[DetectorScores], mut sink: W) -> io::Result<()> {
    for s in scores {
        serde_json::to_writer(&mut sink, s)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub fn read_scores<R: Read>(source: R) -> Result<Vec<DetectorScores>, CorpusError> {
    let mut ids = IdTracker::new();
    let mut out = Vec::new();
    for_each_line(source, |line, text| {
        let s: DetectorScores = parse_line(text)?;
        for (name, v) in [
            ("sigma", s.sigma),
            ("gain", s.gain),
            ("evidence", s.evidence),
            ("cebag", s.cebag),
            ("avgprob_neg", s.avgprob_neg),
        ] {
            if !v.is_finite() {
                return Err(RecordErrorKind::NonFiniteScore(name.into()));
            }
        }
        if s.length == 0 {
            return Err(RecordErrorKind::ZeroLength);
        }
        ids.admit(&s.sample_id, line)?;
        out.push(s);
        Ok(())
    })?;
    Ok(out)
}

/// One externally computed detector score (e.g. a sampling-based baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScore {
    pub sample_id: String,
    pub score: f64,
}

pub fn read_external_scores<R: Read>(source: R) -> Result<Vec<(String, f64)>, CorpusError> {
    let mut ids = IdTracker::new();
    let mut out = Vec::new();
    for_each_line(source, |line, text| {
        let s: ExternalScore = parse_line(text)?;
        if !s.score.is_finite() {
            return Err(RecordErrorKind::NonFiniteScore("score".into()));
        }
        ids.admit(&s.sample_id, line)?;
        out.push((s.sample_id, s.score));
        Ok(())
    })?;
    Ok(out)
}

pub fn write_external_scores<W: Write>(scores: &[(String, f64)], mut sink: W) -> io::Result<()> {
    for (sample_id, score) in scores {
        let rec = ExternalScore {
            sample_id: sample_id.clone(),
            score: *score,
        };
        serde_json::to_writer(&mut sink, &rec)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

#[derive(Deserialize)]
struct TruthFields {
    sample_id: String,
    #[serde(default)]
    green_score: Option<f64>,
    #[serde(default)]
    label: Option<bool>,
}

/// Reads `sample_id`, `green_score` and `label` from every line, ignoring
/// other fields. Works on corpus files and on bare label files.
pub fn read_ground_truth<R: Read>(source: R) -> Result<Vec<GroundTruth>, CorpusError> {
    let mut ids = IdTracker::new();
    let mut out = Vec::new();
    for_each_line(source, |line, text| {
        let t: TruthFields = parse_line(text)?;
        if let Some(g) = t.green_score {
            if !(0.0..=1.0).contains(&g) {
                return Err(RecordErrorKind::GreenOutOfRange(g));
            }
        }
        ids.admit(&t.sample_id, line)?;
        out.push(GroundTruth {
            sample_id: t.sample_id,
            green_score: t.green_score,
            label: t.label,
        });
        Ok(())
    })?;
    Ok(out)
}
