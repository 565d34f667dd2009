//! Grounding evaluation and benchmark curation.

mod annotate;
mod category;
mod curate;
mod metrics;

pub use annotate::{
    annotate_categories, serve_lines, AnnotateRequest, AnnotateResponse, AnnotationErrorRecord, AnnotationFailure,
    AnnotationReport, AnnotatorClient, KeywordAnnotator, Label, StdioAnnotator, TransportError, TAXONOMY_VERSION,
};
pub use category::{CategoryGroup, SemanticCategory, UnknownCategory};
pub use curate::{
    center_position, curate, BalanceReport, CurationOutcome, CurationTargets, Family, FamilyBalance, ShareBucket,
    Shortfall, ValueBalance,
};
pub use metrics::{
    evaluate, evaluate_with_buckets, sample_ious, DurationBuckets, EvalReport, Prediction, RecallAt, SliceStats,
    DEFAULT_THRESHOLDS, UNLABELED,
};

use crate::span::SpanError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptySamples,
    #[error("no prediction for sample {0}")]
    MissingPrediction(String),
    #[error("prediction for sample {0}: {1}")]
    InvalidPrediction(String, SpanError),
    #[error("sample {0}: {1}")]
    InvalidSample(String, SpanError),
    #[error("duplicate sample id {0}")]
    DuplicateSample(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
