use serde::{Deserialize, Serialize};

use crate::grammar::{serialize_cot, CotSegment};
use crate::span::GroundingSample;

/// Number of reasoning-formatted examples built for the cold-start set.
pub const DEFAULT_COLD_START_SIZE: usize = 150;

/// A grounding sample together with timestamped captions of its video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStartSource {
    #[serde(flatten)]
    pub sample: GroundingSample,
    pub segments: Vec<CotSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStartPair {
    pub sample_id: String,
    pub prompt: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColdStartOutcome {
    pub pairs: Vec<ColdStartPair>,
    /// `(sample id, reason)` for every source that produced no pair.
    pub skipped: Vec<(String, String)>,
}

/// Instruction text shown to the policy for one grounding sample.
pub fn grounding_prompt(sample: &GroundingSample) -> String {
    format!(
        "The video lasts {} seconds. Find the segment matching the query: \"{}\". \
         First describe the relevant moments as \"start to end: caption\" entries separated by semicolons \
         inside <think></think>, then give the segment as <answer>start to end</answer> in seconds.",
        sample.duration,
        sample.query.trim()
    )
}

/// Turn captioned samples into supervised (prompt, target) pairs whose
/// targets follow the reasoning template.
pub fn build_cold_start(sources: &[ColdStartSource]) -> ColdStartOutcome {
    let mut out = ColdStartOutcome::default();
    for src in sources {
        let id = src.sample.sample_id().to_string();
        if src.segments.is_empty() {
            out.skipped.push((id, "no captions".into()));
            continue;
        }
        if let Err(e) = src.sample.validate() {
            out.skipped.push((id, e.to_string()));
            continue;
        }
        match serialize_cot(&src.segments, &src.sample.gt) {
            Ok(target) => out.pairs.push(ColdStartPair { prompt: grounding_prompt(&src.sample), sample_id: id, target }),
            Err(e) => out.skipped.push((id, e.to_string())),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{format_reward, parse_cot, parse_response};
    use crate::span::TimeSpan;

    #[test]
    fn skips_sources_without_captions() {
        let sample = GroundingSample::new("v", 20.0, "a dog runs", TimeSpan::raw(2.0, 6.0));
        let sources = vec![
            ColdStartSource { sample: sample.clone(), segments: vec![] },
            ColdStartSource {
                sample: sample.clone().with_id("v#1"),
                segments: vec![CotSegment::new(TimeSpan::raw(0.0, 2.0), "a yard"), CotSegment::new(TimeSpan::raw(2.0, 6.0), "a dog runs")],
            },
        ];
        let out = build_cold_start(&sources);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.pairs.len(), 1);
        let p = parse_response(&out.pairs[0].target);
        assert_eq!(format_reward(&p), 1);
        assert_eq!(p.span, Some(TimeSpan::raw(2.0, 6.0)));
        assert_eq!(parse_cot(p.think_text.as_deref().unwrap()).segments, sources[1].segments);
        assert!(out.pairs[0].prompt.contains("a dog runs"));
    }
}
