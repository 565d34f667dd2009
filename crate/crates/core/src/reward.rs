//! Verifiable grounding rewards: IoU, timestamp-aware IoU and their
//! combination with the template reward.

use serde::{Deserialize, Serialize};

use crate::grammar::{format_reward, ParseOutcome};
use crate::span::{validate_duration, SpanError, TimeSpan};

/// Temporal intersection-over-union of two valid spans.
///
/// A zero-length union (both spans collapsed onto the same instant) scores 0.
pub fn iou(pred: &TimeSpan, gt: &TimeSpan) -> Result<f64, SpanError> {
    pred.validate()?;
    gt.validate()?;
    Ok(iou_unchecked(pred, gt))
}

pub(crate) fn iou_unchecked(pred: &TimeSpan, gt: &TimeSpan) -> f64 {
    let inter = (pred.end.min(gt.end) - pred.start.max(gt.start)).max(0.0);
    let union = pred.end.max(gt.end) - pred.start.min(gt.start);
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Timestamp-aware IoU: IoU scaled by one penalty factor per endpoint,
/// `(1 - |Δstart| / duration) * (1 - |Δend| / duration)`.
///
/// The prediction is clamped into `[0, duration]` first, so both factors
/// stay in `[0, 1]` and the result never exceeds the (clamped) IoU.
pub fn tiou(pred: &TimeSpan, gt: &TimeSpan, duration: f64) -> Result<f64, SpanError> {
    validate_duration(duration)?;
    pred.validate()?;
    gt.validate()?;
    if !gt.lies_within(duration) {
        return Err(SpanError::OutsideVideo { start: gt.start, end: gt.end, duration });
    }
    let pred = pred.clamp_to(duration);
    Ok(tiou_clamped(&pred, gt, duration))
}

fn tiou_clamped(pred: &TimeSpan, gt: &TimeSpan, duration: f64) -> f64 {
    let start_factor = 1.0 - (pred.start - gt.start).abs() / duration;
    let end_factor = 1.0 - (pred.end - gt.end).abs() / duration;
    iou_unchecked(pred, gt) * start_factor.clamp(0.0, 1.0) * end_factor.clamp(0.0, 1.0)
}

/// Per-response reward components. `total` is always `tiou + format`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub iou: f64,
    pub tiou: f64,
    pub format: u8,
    pub total: f64,
}

impl RewardBreakdown {
    pub const ZERO: Self = Self { iou: 0.0, tiou: 0.0, format: 0, total: 0.0 };

    fn from_parts(iou: f64, tiou: f64, format: u8) -> Self {
        Self { iou, tiou, format, total: tiou + f64::from(format) }
    }
}

/// Score a parsed response against the ground truth.
///
/// The tIoU term uses whatever answer span the parser recovered, even when the
/// surrounding template is malformed; the format term is scored separately.
/// Reversed or otherwise invalid spans score zero, as does an invalid
/// ground truth or duration.
pub fn total_reward(parse: &ParseOutcome, gt: &TimeSpan, duration: f64) -> RewardBreakdown {
    let format = format_reward(parse);
    let Some(span) = parse.span.as_ref() else {
        return RewardBreakdown::from_parts(0.0, 0.0, format);
    };
    if validate_duration(duration).is_err()
        || span.validate().is_err()
        || gt.validate().is_err()
        || !gt.lies_within(duration)
    {
        return RewardBreakdown::from_parts(0.0, 0.0, format);
    }
    let clamped = span.clamp_to(duration);
    let iou = iou_unchecked(&clamped, gt);
    let tiou = tiou_clamped(&clamped, gt, duration);
    RewardBreakdown::from_parts(iou, tiou, format)
}
