//! Recall-at-IoU and mIoU over a prediction set, with slice breakdowns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::numeric::CompensatedSum;
use crate::reward::iou;
use crate::span::{GroundingSample, TimeSpan};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];
pub const UNLABELED: &str = "unlabeled";

/// A top-1 prediction, or an explicit miss (scored as IoU 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Span(TimeSpan),
    Miss,
}

/// Right-closed duration buckets `(e0, e1], (e1, e2], ...` plus an overflow
/// bucket above the last edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DurationBuckets {
    edges: Vec<f64>,
}

impl Default for DurationBuckets {
    fn default() -> Self {
        Self { edges: vec![0.0, 60.0, 120.0, 180.0] }
    }
}

impl DurationBuckets {
    pub fn new(edges: Vec<f64>) -> Result<Self, EvalError> {
        let ok = edges.len() >= 2
            && edges.iter().all(|e| e.is_finite() && *e >= 0.0)
            && edges.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(EvalError::Config(format!("duration edges must be >= 2 increasing non-negative values, got {edges:?}")));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Labels of the in-range buckets, in order.
    pub fn labels(&self) -> Vec<String> {
        self.edges.windows(2).map(|w| format!("{}-{}s", w[0], w[1])).collect()
    }

    pub fn overflow_label(&self) -> String {
        format!(">{}s", self.edges[self.edges.len() - 1])
    }

    /// Bucket label for a duration; durations at or below the first edge fall
    /// into the first bucket.
    pub fn label(&self, duration: f64) -> String {
        let last = self.edges.len() - 1;
        if duration > self.edges[last] {
            return self.overflow_label();
        }
        let idx = self.edges[1..].iter().position(|&e| duration <= e).unwrap_or(last - 1);
        format!("{}-{}s", self.edges[idx], self.edges[idx + 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub threshold: f64,
    /// Percentage of samples with IoU strictly above `threshold`.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub n: usize,
    pub miou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub miou: f64,
    pub r1: Vec<RecallAt>,
    pub per_category: BTreeMap<String, SliceStats>,
    pub per_source: BTreeMap<String, SliceStats>,
    pub per_duration_bucket: BTreeMap<String, SliceStats>,
}

impl EvalReport {
    pub fn recall(&self, threshold: f64) -> Option<f64> {
        self.r1.iter().find(|r| r.threshold == threshold).map(|r| r.percent)
    }

    /// Aligned-column text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>10}", "metric", "value");
        let _ = writeln!(out, "{:<24} {:>10}", "n", self.n);
        for r in &self.r1 {
            let _ = writeln!(out, "{:<24} {:>10.2}", format!("R1@{}", r.threshold), r.percent);
        }
        let _ = writeln!(out, "{:<24} {:>10.2}", "mIoU(%)", 100.0 * self.miou);
        for (title, slices) in [
            ("category", &self.per_category),
            ("source", &self.per_source),
            ("duration", &self.per_duration_bucket),
        ] {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<24} {:>6} {:>10}", title, "n", "mIoU(%)");
            for (k, s) in slices {
                let _ = writeln!(out, "{:<24} {:>6} {:>10.2}", k, s.n, 100.0 * s.miou);
            }
        }
        out
    }
}

/// Evaluate with the default duration buckets.
pub fn evaluate(
    predictions: &BTreeMap<String, Prediction>,
    samples: &[GroundingSample],
    thresholds: &[f64],
) -> Result<EvalReport, EvalError> {
    evaluate_with_buckets(predictions, samples, thresholds, &DurationBuckets::default())
}

/// Per-sample IoU in input order; misses score 0.
pub fn sample_ious(
    predictions: &BTreeMap<String, Prediction>,
    samples: &[GroundingSample],
) -> Result<Vec<f64>, EvalError> {
    samples
        .par_iter()
        .map(|s| {
            let id = s.sample_id();
            s.validate().map_err(|e| EvalError::InvalidSample(id.to_string(), e))?;
            match predictions.get(id) {
                None => Err(EvalError::MissingPrediction(id.to_string())),
                Some(Prediction::Miss) => Ok(0.0),
                Some(Prediction::Span(p)) => iou(p, &s.gt).map_err(|e| EvalError::InvalidPrediction(id.to_string(), e)),
            }
        })
        .collect()
}

pub fn evaluate_with_buckets(
    predictions: &BTreeMap<String, Prediction>,
    samples: &[GroundingSample],
    thresholds: &[f64],
    buckets: &DurationBuckets,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    if let Some(&t) = thresholds.iter().find(|t| !(t.is_finite() && (0.0..=1.0).contains(*t))) {
        return Err(EvalError::Config(format!("threshold {t} outside [0, 1]")));
    }
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.sample_id()) {
            return Err(EvalError::DuplicateSample(s.sample_id().to_string()));
        }
    }
    let ious = sample_ious(predictions, samples)?;
    let n = samples.len();

    let mut r1 = Vec::with_capacity(thresholds.len());
    for &m in thresholds {
        let hits = ious.iter().filter(|&&v| v > m).count();
        r1.push(RecallAt { threshold: m, percent: 100.0 * hits as f64 / n as f64 });
    }

    let mut total = CompensatedSum::new();
    let mut cat: BTreeMap<String, (usize, CompensatedSum)> = BTreeMap::new();
    let mut src: BTreeMap<String, (usize, CompensatedSum)> = BTreeMap::new();
    let mut dur: BTreeMap<String, (usize, CompensatedSum)> = BTreeMap::new();
    for (s, &v) in samples.iter().zip(&ious) {
        total.add(v);
        let keys = [
            (&mut cat, s.category.map_or_else(|| UNLABELED.to_string(), |c| c.code().to_string())),
            (&mut src, s.source.clone().unwrap_or_else(|| UNLABELED.to_string())),
            (&mut dur, buckets.label(s.duration)),
        ];
        for (map, key) in keys {
            let e = map.entry(key).or_default();
            e.0 += 1;
            e.1.add(v);
        }
    }
    let finish = |m: BTreeMap<String, (usize, CompensatedSum)>| {
        m.into_iter()
            .map(|(k, (n, s))| (k, SliceStats { n, miou: s.value() / n as f64 }))
            .collect()
    };
    Ok(EvalReport {
        n,
        miou: total.value() / n as f64,
        r1,
        per_category: finish(cat),
        per_source: finish(src),
        per_duration_bucket: finish(dur),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SemanticCategory;

    fn sample(id: &str, gt: (f64, f64), duration: f64) -> GroundingSample {
        GroundingSample::new(id, duration, "q", TimeSpan::raw(gt.0, gt.1))
    }

    fn preds(items: &[(&str, Prediction)]) -> BTreeMap<String, Prediction> {
        items.iter().map(|(k, p)| (k.to_string(), *p)).collect()
    }

    #[test]
    fn strict_threshold_excludes_boundary() {
        // IoUs 0.6, 0.4, 0.5, 0.9 against gt [0, 10].
        let samples: Vec<_> = ["a", "b", "c", "d"].iter().map(|id| sample(id, (0.0, 10.0), 20.0)).collect();
        let p = preds(&[
            ("a", Prediction::Span(TimeSpan::raw(0.0, 6.0))),
            ("b", Prediction::Span(TimeSpan::raw(0.0, 4.0))),
            ("c", Prediction::Span(TimeSpan::raw(0.0, 5.0))),
            ("d", Prediction::Span(TimeSpan::raw(0.0, 9.0))),
        ]);
        let r = evaluate(&p, &samples, &[0.5]).unwrap();
        assert_eq!(r.recall(0.5), Some(50.0));
        assert!((r.miou - 0.6).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_disjoint() {
        let samples = vec![sample("a", (1.0, 2.0), 10.0), sample("b", (3.0, 9.0), 100.0)];
        let exact = preds(&[("a", Prediction::Span(TimeSpan::raw(1.0, 2.0))), ("b", Prediction::Span(TimeSpan::raw(3.0, 9.0)))]);
        let r = evaluate(&exact, &samples, &DEFAULT_THRESHOLDS).unwrap();
        assert!(r.r1.iter().all(|x| x.percent == 100.0));
        assert_eq!(r.miou, 1.0);

        let off = preds(&[("a", Prediction::Span(TimeSpan::raw(5.0, 6.0))), ("b", Prediction::Miss)]);
        let r = evaluate(&off, &samples, &DEFAULT_THRESHOLDS).unwrap();
        assert!(r.r1.iter().all(|x| x.percent == 0.0));
        assert_eq!(r.miou, 0.0);
    }

    #[test]
    fn slices_partition_the_sample_set() {
        let mut a = sample("a", (1.0, 2.0), 30.0);
        a.category = Some(SemanticCategory::OC);
        a.source = Some("charades".into());
        let b = sample("b", (3.0, 9.0), 150.0);
        let c = sample("c", (3.0, 9.0), 400.0);
        let p = preds(&[
            ("a", Prediction::Span(TimeSpan::raw(1.0, 2.0))),
            ("b", Prediction::Span(TimeSpan::raw(3.0, 6.0))),
            ("c", Prediction::Miss),
        ]);
        let r = evaluate(&p, &[a, b, c], &DEFAULT_THRESHOLDS).unwrap();
        for slices in [&r.per_category, &r.per_source, &r.per_duration_bucket] {
            assert_eq!(slices.values().map(|s| s.n).sum::<usize>(), 3);
            let weighted: f64 = slices.values().map(|s| s.miou * s.n as f64).sum::<f64>() / 3.0;
            assert!((weighted - r.miou).abs() < 1e-12);
        }
        assert_eq!(r.per_category["OC"].n, 1);
        assert_eq!(r.per_duration_bucket["120-180s"].n, 1);
        assert_eq!(r.per_duration_bucket[">180s"].n, 1);
        assert!(r.to_table().contains("R1@0.7"));
    }

    #[test]
    fn error_cases() {
        assert_eq!(evaluate(&BTreeMap::new(), &[], &[0.5]), Err(EvalError::EmptySamples));
        let s = vec![sample("a", (1.0, 2.0), 10.0)];
        assert_eq!(evaluate(&BTreeMap::new(), &s, &[0.5]), Err(EvalError::MissingPrediction("a".into())));
        let bad = preds(&[("a", Prediction::Span(TimeSpan::raw(2.0, 1.0)))]);
        assert!(matches!(evaluate(&bad, &s, &[0.5]), Err(EvalError::InvalidPrediction(..))));
        let dup = vec![s[0].clone(), s[0].clone()];
        assert!(matches!(evaluate(&BTreeMap::new(), &dup, &[0.5]), Err(EvalError::DuplicateSample(_))));
    }

    #[test]
    fn duration_bucket_labels() {
        let b = DurationBuckets::default();
        assert_eq!(b.label(0.5), "0-60s");
        assert_eq!(b.label(60.0), "0-60s");
        assert_eq!(b.label(60.1), "60-120s");
        assert_eq!(b.label(180.0), "120-180s");
        assert_eq!(b.label(181.0), ">180s");
        assert!(DurationBuckets::new(vec![0.0]).is_err());
        assert!(DurationBuckets::new(vec![10.0, 5.0]).is_err());
    }
}
