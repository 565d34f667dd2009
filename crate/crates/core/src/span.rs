//! Time spans and grounding samples.

use serde::{Deserialize, Serialize};

use crate::eval::SemanticCategory;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpanError {
    #[error("span endpoint is not finite: [{start}, {end}]")]
    NonFinite { start: f64, end: f64 },
    #[error("span endpoint is negative: [{start}, {end}]")]
    Negative { start: f64, end: f64 },
    #[error("span start exceeds end: [{start}, {end}]")]
    Reversed { start: f64, end: f64 },
    #[error("duration must be positive and finite, got {0}")]
    BadDuration(f64),
    #[error("ground truth [{start}, {end}] lies outside [0, {duration}]")]
    OutsideVideo { start: f64, end: f64, duration: f64 },
    #[error("difficulty {0} outside [0, 1]")]
    BadDifficulty(f64),
    #[error("sample {0} has an empty video id or query")]
    MissingText(String),
}

/// A `[start, end]` interval in seconds.
///
/// Fields are public so that raw parser output (which may be reversed) can
/// be represented; every metric validates its inputs through
/// [`TimeSpan::validate`]. Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

impl From<[f64; 2]> for TimeSpan {
    fn from([start, end]: [f64; 2]) -> Self {
        Self { start, end }
    }
}

impl From<TimeSpan> for [f64; 2] {
    fn from(span: TimeSpan) -> Self {
        [span.start, span.end]
    }
}

impl TimeSpan {
    /// Validated constructor.
    pub fn new(start: f64, end: f64) -> Result<Self, SpanError> {
        let span = Self { start, end };
        span.validate()?;
        Ok(span)
    }

    /// Constructor without validation, for raw parser output.
    pub const fn raw(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn validate(&self) -> Result<(), SpanError> {
        let (start, end) = (self.start, self.end);
        if !start.is_finite() || !end.is_finite() {
            return Err(SpanError::NonFinite { start, end });
        }
        if start < 0.0 || end < 0.0 {
            return Err(SpanError::Negative { start, end });
        }
        if start > end {
            return Err(SpanError::Reversed { start, end });
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    /// Clamp both endpoints into `[0, duration]`.
    pub fn clamp_to(&self, duration: f64) -> Self {
        Self {
            start: self.start.clamp(0.0, duration),
            end: self.end.clamp(0.0, duration),
        }
    }

    pub fn lies_within(&self, duration: f64) -> bool {
        self.start >= 0.0 && self.end <= duration
    }
}

pub(crate) fn validate_duration(duration: f64) -> Result<(), SpanError> {
    if duration.is_finite() && duration > 0.0 {
        Ok(())
    } else {
        Err(SpanError::BadDuration(duration))
    }
}

/// One grounding record: a query over a video with its ground-truth span.
///
/// The optional `id` distinguishes several queries over the same video; when
/// absent, the video id doubles as the sample id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub video_id: String,
    pub duration: f64,
    pub query: String,
    pub gt: TimeSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<SemanticCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl GroundingSample {
    pub fn new(video_id: impl Into<String>, duration: f64, query: impl Into<String>, gt: TimeSpan) -> Self {
        Self {
            id: None,
            video_id: video_id.into(),
            duration,
            query: query.into(),
            gt,
            difficulty: None,
            category: None,
            source: None,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn with_category(mut self, category: SemanticCategory) -> Self {
        self.category = Some(category);
        self
    }

    pub fn sample_id(&self) -> &str {
        self.id.as_deref().unwrap_or(&self.video_id)
    }

    pub fn validate(&self) -> Result<(), SpanError> {
        if self.video_id.is_empty() || self.query.trim().is_empty() {
            return Err(SpanError::MissingText(self.sample_id().to_string()));
        }
        validate_duration(self.duration)?;
        self.gt.validate()?;
        if !self.gt.lies_within(self.duration) {
            return Err(SpanError::OutsideVideo {
                start: self.gt.start,
                end: self.gt.end,
                duration: self.duration,
            });
        }
        if let Some(d) = self.difficulty {
            if !(0.0..=1.0).contains(&d) {
                return Err(SpanError::BadDifficulty(d));
            }
        }
        Ok(())
    }
}
