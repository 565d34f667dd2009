//! JSON-Lines readers and writers plus the record types of the on-disk
//! formats. Blank lines are skipped; line numbers in errors are 1-based.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::eval::Prediction;
use crate::reward::RewardBreakdown;
use crate::span::TimeSpan;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl JsonlError {
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Parse { line, .. } | Self::Invalid { line, .. } => Some(*line),
            Self::Io(_) => None,
        }
    }
}

/// Parsed records tagged with their 1-based line numbers.
pub type NumberedLines<T> = Vec<(usize, Result<T, JsonlError>)>;

/// Parse every non-blank line independently. I/O failures abort; parse
/// failures are returned per line so callers can isolate bad records.
pub fn read_lines<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<NumberedLines<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&text).map_err(|source| JsonlError::Parse { line: line_no, source });
        out.push((line_no, parsed));
    }
    Ok(out)
}

/// Parse every non-blank line, failing on the first bad one.
pub fn read_all<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, JsonlError> {
    read_lines(reader)?.into_iter().map(|(_, r)| r).collect()
}

pub fn write_all<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<(), JsonlError> {
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// One model response to score: `{"sample_id": .., "text": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub sample_id: String,
    pub text: String,
}

/// One scored response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub line: usize,
    pub sample_id: String,
    #[serde(flatten)]
    pub reward: RewardBreakdown,
}

/// One prediction: `{"sample_id": .., "pred": [s, e]}` or
/// `{"sample_id": .., "miss": true}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<TimeSpan>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub miss: bool,
}

impl PredictionRecord {
    pub fn span(sample_id: impl Into<String>, span: TimeSpan) -> Self {
        Self { sample_id: sample_id.into(), pred: Some(span), miss: false }
    }

    pub fn miss(sample_id: impl Into<String>) -> Self {
        Self { sample_id: sample_id.into(), pred: None, miss: true }
    }

    pub fn to_prediction(&self) -> Result<Prediction, String> {
        match (self.pred, self.miss) {
            (Some(span), false) => Ok(Prediction::Span(span)),
            (None, true) => Ok(Prediction::Miss),
            (Some(_), true) => Err(format!("sample {}: both pred and miss given", self.sample_id)),
            (None, false) => Err(format!("sample {}: neither pred nor miss given", self.sample_id)),
        }
    }
}
