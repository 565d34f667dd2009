//! Balanced benchmark curation.
//!
//! Selection is greedy. Every candidate belongs to one value in each
//! balancing family (source, duration bucket, query-center bucket, semantic
//! category). At each step the curator takes the candidate whose family
//! values have the largest remaining deficit `target_count - selected_count`,
//! comparing families lexicographically in that priority order. Ties fall to
//! a seeded shuffle of the pool.
//!
//! The source family is a hard constraint: a source never exceeds its target
//! count, so a scarce source produces a shortfall instead of being padded
//! with another source. The remaining families steer the order of selection
//! but do not cap it.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, SemanticCategory};
use crate::span::GroundingSample;

/// One target bucket over a real-valued attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareBucket {
    pub lo: f64,
    pub hi: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationTargets {
    pub total: usize,
    /// Right-closed duration ranges in seconds.
    pub duration_buckets: Vec<ShareBucket>,
    /// Half-open ranges over the relative query center; the last is closed.
    pub center_buckets: Vec<ShareBucket>,
    pub source_shares: BTreeMap<String, f64>,
    pub category_shares: BTreeMap<SemanticCategory, f64>,
    pub tolerance: f64,
}

fn equal_buckets(edges: &[f64]) -> Vec<ShareBucket> {
    let share = 1.0 / (edges.len() - 1) as f64;
    edges.windows(2).map(|w| ShareBucket { lo: w[0], hi: w[1], share }).collect()
}

impl Default for CurationTargets {
    fn default() -> Self {
        Self {
            total: 800,
            duration_buckets: equal_buckets(&[0.0, 60.0, 120.0, 180.0]),
            center_buckets: equal_buckets(&[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
            source_shares: BTreeMap::new(),
            category_shares: BTreeMap::new(),
            tolerance: 0.02,
        }
    }
}

fn check_shares(family: &str, shares: impl Iterator<Item = f64>) -> Result<(), EvalError> {
    let shares: Vec<f64> = shares.collect();
    if shares.is_empty() {
        return Ok(());
    }
    if shares.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(EvalError::Config(format!("{family} shares must be finite and non-negative")));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(EvalError::Config(format!("{family} shares sum to {sum}, expected 1")));
    }
    Ok(())
}

fn check_buckets(family: &str, buckets: &[ShareBucket]) -> Result<(), EvalError> {
    if buckets.iter().any(|b| !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi)) {
        return Err(EvalError::Config(format!("{family} buckets need finite lo < hi")));
    }
    if buckets.windows(2).any(|w| w[0].hi > w[1].lo) {
        return Err(EvalError::Config(format!("{family} buckets must be sorted and non-overlapping")));
    }
    check_shares(family, buckets.iter().map(|b| b.share))
}

impl CurationTargets {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.total == 0 {
            return Err(EvalError::Config("total must be >= 1".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(EvalError::Config(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        check_buckets("duration", &self.duration_buckets)?;
        check_buckets("center", &self.center_buckets)?;
        check_shares("source", self.source_shares.values().copied())?;
        check_shares("category", self.category_shares.values().copied())
    }
}

/// Relative position of the ground-truth midpoint within the video.
pub fn center_position(sample: &GroundingSample) -> f64 {
    sample.gt.midpoint() / sample.duration
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Source,
    Duration,
    Center,
    Category,
}

const FAMILIES: [Family; 4] = [Family::Source, Family::Duration, Family::Center, Family::Category];

/// One balancing family: value labels, their shares, and the classifier.
struct FamilySpec {
    family: Family,
    labels: Vec<String>,
    shares: Vec<f64>,
}

impl FamilySpec {
    fn active(&self) -> bool {
        !self.labels.is_empty()
    }
}

fn bucket_label(b: &ShareBucket) -> String {
    format!("{}-{}", b.lo, b.hi)
}

fn family_specs(t: &CurationTargets) -> [FamilySpec; 4] {
    [
        FamilySpec {
            family: Family::Source,
            labels: t.source_shares.keys().cloned().collect(),
            shares: t.source_shares.values().copied().collect(),
        },
        FamilySpec {
            family: Family::Duration,
            labels: t.duration_buckets.iter().map(bucket_label).collect(),
            shares: t.duration_buckets.iter().map(|b| b.share).collect(),
        },
        FamilySpec {
            family: Family::Center,
            labels: t.center_buckets.iter().map(bucket_label).collect(),
            shares: t.center_buckets.iter().map(|b| b.share).collect(),
        },
        FamilySpec {
            family: Family::Category,
            labels: t.category_shares.keys().map(|c| c.code().to_string()).collect(),
            shares: t.category_shares.values().copied().collect(),
        },
    ]
}

/// Family value index for a sample; `None` means "outside every target value".
fn classify(t: &CurationTargets, s: &GroundingSample) -> [Option<usize>; 4] {
    let source = s.source.as_ref().and_then(|src| t.source_shares.keys().position(|k| k == src));
    let duration = t.duration_buckets.iter().position(|b| s.duration > b.lo && s.duration <= b.hi);
    let c = center_position(s);
    let last = t.center_buckets.len().saturating_sub(1);
    let center = t
        .center_buckets
        .iter()
        .enumerate()
        .position(|(i, b)| c >= b.lo && (c < b.hi || (i == last && c <= b.hi)));
    let category = s.category.and_then(|cat| t.category_shares.keys().position(|k| *k == cat));
    [source, duration, center, category]
}

/// Largest-remainder apportionment of `total` over `shares`.
fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueBalance {
    pub value: String,
    pub target_share: f64,
    pub target_count: usize,
    pub available: usize,
    pub achieved_count: usize,
    pub achieved_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyBalance {
    pub family: Family,
    pub values: Vec<ValueBalance>,
    /// Selected samples outside every target value of this family.
    pub unmatched: usize,
    pub max_deviation: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub family: Family,
    pub value: String,
    pub target_count: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub requested: usize,
    pub feasible: usize,
    pub selected: usize,
    pub tolerance: f64,
    pub families: Vec<FamilyBalance>,
    pub shortfalls: Vec<Shortfall>,
    /// Sample ids dropped before selection (invalid or duplicated).
    pub rejected: Vec<String>,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurationOutcome {
    /// Samples in selection order.
    pub selected: Vec<GroundingSample>,
    pub report: BalanceReport,
}

type Cell = [Option<usize>; 4];

/// Select a balanced subset of `pool`.
pub fn curate(pool: &[GroundingSample], targets: &CurationTargets, seed: u64) -> Result<CurationOutcome, EvalError> {
    targets.validate()?;
    let specs = family_specs(targets);

    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    let mut candidates: Vec<usize> = Vec::with_capacity(pool.len());
    for (i, s) in pool.iter().enumerate() {
        if s.validate().is_err() || !seen.insert(s.sample_id()) {
            rejected.push(s.sample_id().to_string());
        } else {
            candidates.push(i);
        }
    }
    if candidates.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let targets_per_family: Vec<Vec<usize>> = specs.iter().map(|f| apportion(targets.total, &f.shares)).collect();
    let source_active = specs[0].active();

    let mut available: Vec<Vec<usize>> = specs.iter().map(|f| vec![0; f.labels.len()]).collect();
    let mut cells: BTreeMap<Cell, std::collections::VecDeque<(usize, usize)>> = BTreeMap::new();
    for (rank, &i) in candidates.iter().enumerate() {
        let cell = classify(targets, &pool[i]);
        if source_active && cell[0].is_none() {
            continue;
        }
        for (f, v) in cell.iter().enumerate() {
            if let Some(v) = v {
                available[f][*v] += 1;
            }
        }
        cells.entry(cell).or_default().push_back((rank, i));
    }

    let feasible = if source_active {
        let capped: usize = targets_per_family[0].iter().zip(&available[0]).map(|(t, a)| (*t).min(*a)).sum();
        capped.min(targets.total)
    } else {
        cells.values().map(|q| q.len()).sum::<usize>().min(targets.total)
    };

    let mut counts: Vec<Vec<usize>> = specs.iter().map(|f| vec![0; f.labels.len()]).collect();
    let mut unmatched = [0usize; 4];
    let mut selected = Vec::with_capacity(feasible);
    let deficit = |counts: &Vec<Vec<usize>>, unmatched: &[usize; 4], f: usize, v: Option<usize>| -> i64 {
        match v {
            Some(v) => targets_per_family[f][v] as i64 - counts[f][v] as i64,
            None if specs[f].active() => -(unmatched[f] as i64),
            None => 0,
        }
    };
    while selected.len() < feasible {
        let mut best: Option<(Cell, [i64; 4], usize)> = None;
        for (cell, queue) in &cells {
            let Some(&(rank, _)) = queue.front() else { continue };
            if let (true, Some(src)) = (source_active, cell[0]) {
                if counts[0][src] >= targets_per_family[0][src] {
                    continue;
                }
            }
            let key = [0, 1, 2, 3].map(|f| deficit(&counts, &unmatched, f, cell[f]));
            let better = match &best {
                None => true,
                Some((_, best_key, best_rank)) => key > *best_key || (key == *best_key && rank < *best_rank),
            };
            if better {
                best = Some((*cell, key, rank));
            }
        }
        let Some((cell, _, _)) = best else { break };
        let (_, idx) = cells.get_mut(&cell).and_then(|q| q.pop_front()).expect("non-empty cell");
        for (f, v) in cell.iter().enumerate() {
            match v {
                Some(v) => counts[f][*v] += 1,
                None => unmatched[f] += 1,
            }
        }
        selected.push(pool[idx].clone());
    }

    let n_sel = selected.len();
    let mut families = Vec::new();
    let mut shortfalls = Vec::new();
    for (f, spec) in specs.iter().enumerate() {
        if !spec.active() {
            continue;
        }
        let mut values = Vec::with_capacity(spec.labels.len());
        let mut max_dev = 0.0f64;
        for (v, label) in spec.labels.iter().enumerate() {
            let achieved_share = if n_sel == 0 { 0.0 } else { counts[f][v] as f64 / n_sel as f64 };
            max_dev = max_dev.max((achieved_share - spec.shares[v]).abs());
            if available[f][v] < targets_per_family[f][v] {
                shortfalls.push(Shortfall {
                    family: spec.family,
                    value: label.clone(),
                    target_count: targets_per_family[f][v],
                    available: available[f][v],
                });
            }
            values.push(ValueBalance {
                value: label.clone(),
                target_share: spec.shares[v],
                target_count: targets_per_family[f][v],
                available: available[f][v],
                achieved_count: counts[f][v],
                achieved_share,
            });
        }
        families.push(FamilyBalance {
            family: FAMILIES[f],
            values,
            unmatched: unmatched[f],
            max_deviation: max_dev,
            within_tolerance: max_dev <= targets.tolerance,
        });
    }
    let within_tolerance = families.iter().all(|f| f.within_tolerance);
    Ok(CurationOutcome {
        selected,
        report: BalanceReport {
            requested: targets.total,
            feasible,
            selected: n_sel,
            tolerance: targets.tolerance,
            families,
            shortfalls,
            rejected,
            within_tolerance,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::span::TimeSpan;

    #[test]
    fn center_position_examples() {
        let s = |gt: (f64, f64), d: f64| GroundingSample::new("v", d, "q", TimeSpan::raw(gt.0, gt.1));
        assert_eq!(center_position(&s((0.0, 50.0), 50.0)), 0.5);
        assert_eq!(center_position(&s((0.0, 0.0), 50.0)), 0.0);
        assert_eq!(center_position(&s((10.0, 20.0), 40.0)), 0.375);
    }

    #[test]
    fn apportion_sums_to_total() {
        assert_eq!(apportion(10, &[1.0 / 3.0; 3]), vec![4, 3, 3]);
        assert_eq!(apportion(800, &[0.5, 0.5]), vec![400, 400]);
        assert_eq!(apportion(7, &[]), Vec::<usize>::new());
    }

    #[test]
    fn target_validation() {
        let mut t = CurationTargets::default();
        assert!(t.validate().is_ok());
        t.source_shares.insert("a".into(), 0.7);
        assert!(t.validate().is_err());
        t.source_shares.insert("b".into(), 0.3);
        assert!(t.validate().is_ok());
        t.center_buckets[0].hi = 0.5;
        assert!(t.validate().is_err());
    }

    fn skewed_pool(major: usize, minor: usize) -> Vec<GroundingSample> {
        (0..major + minor)
            .map(|i| {
                let src = if i < major { "big" } else { "small" };
                GroundingSample::new(format!("v{i}"), 30.0 + (i % 120) as f64, "q", TimeSpan::raw(1.0, 5.0 + (i % 20) as f64))
                    .with_source(src)
            })
            .collect()
    }

    #[test]
    fn scarce_source_yields_shortfall() {
        let t = CurationTargets {
            total: 800,
            source_shares: [("big".to_string(), 0.5), ("small".to_string(), 0.5)].into(),
            ..Default::default()
        };
        let out = curate(&skewed_pool(1800, 200), &t, 3).unwrap();
        assert_eq!(out.report.feasible, 600);
        assert_eq!(out.selected.len(), 600);
        let small = out.selected.iter().filter(|s| s.source.as_deref() == Some("small")).count();
        assert_eq!(small, 200);
        assert_eq!(out.report.shortfalls.iter().filter(|s| s.family == Family::Source).count(), 1);
        assert_eq!(out.report.shortfalls[0].value, "small");

        // Enough minority samples: no source shortfall.
        let out = curate(&skewed_pool(3600, 400), &t, 3).unwrap();
        assert_eq!(out.selected.len(), 800);
        assert!(out.report.shortfalls.iter().all(|s| s.family != Family::Source));
    }

    #[test]
    fn invalid_samples_are_never_selected() {
        let mut pool = skewed_pool(50, 0);
        pool[0].gt = TimeSpan::raw(1.0, 1e6);
        let t = CurationTargets { total: 30, ..Default::default() };
        let out = curate(&pool, &t, 0).unwrap();
        assert_eq!(out.report.rejected, vec!["v0".to_string()]);
        assert!(out.selected.iter().all(|s| s.gt.lies_within(s.duration)));
    }
}
