use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::reward::iou;
use crate::span::{GroundingSample, TimeSpan};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DifficultyScores {
    /// Input samples with `difficulty` set to the base prediction's IoU.
    pub annotated: Vec<GroundingSample>,
    /// Samples without a base prediction; excluded from `annotated`.
    pub missing: Vec<String>,
    /// Samples whose prediction or ground truth failed validation.
    pub invalid: Vec<(String, String)>,
}

/// Attach a difficulty score (IoU of the base model's prediction) to every
/// sample that has a prediction.
pub fn score_difficulty(samples: &[GroundingSample], predictions: &BTreeMap<String, TimeSpan>) -> DifficultyScores {
    let mut out = DifficultyScores::default();
    for s in samples {
        let id = s.sample_id();
        let Some(pred) = predictions.get(id) else {
            out.missing.push(id.to_string());
            continue;
        };
        match s.validate().and_then(|_| iou(pred, &s.gt)) {
            Ok(d) => {
                let mut annotated = s.clone();
                annotated.difficulty = Some(d);
                out.annotated.push(annotated);
            }
            Err(e) => out.invalid.push((id.to_string(), e.to_string())),
        }
    }
    out
}
