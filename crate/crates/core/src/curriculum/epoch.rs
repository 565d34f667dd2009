use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::CurriculumError;

pub const DEFAULT_EASY_THRESHOLD: f64 = 0.7;

/// How a sample's rollout IoUs within an epoch are reduced to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouStatistic {
    #[default]
    Max,
    Mean,
}

impl IouStatistic {
    pub fn reduce(self, ious: &[f64]) -> Option<f64> {
        if ious.is_empty() {
            return None;
        }
        Some(match self {
            Self::Max => ious.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Mean => crate::numeric::mean(ious.iter().copied())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub epoch: u32,
    pub id: String,
    pub iou: f64,
}

/// Active training pool for the multi-epoch curriculum.
///
/// Ids only ever leave the pool; there is no way to add one back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    active_pool: BTreeSet<String>,
    recorded_iou: BTreeMap<String, f64>,
    epoch: u32,
    removed_log: Vec<Removal>,
    threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochFilterReport {
    pub epoch: u32,
    /// Statistic recorded for every active id this epoch.
    pub scored: BTreeMap<String, f64>,
    pub removed: Vec<Removal>,
    /// Ids that were scored but are not in the active pool.
    pub ignored: Vec<String>,
    /// Active ids with no statistic this epoch; they stay in the pool.
    pub unscored: Vec<String>,
}

impl CurriculumState {
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            active_pool: ids.into_iter().map(Into::into).collect(),
            recorded_iou: BTreeMap::new(),
            epoch: 0,
            removed_log: Vec::new(),
            threshold: DEFAULT_EASY_THRESHOLD,
        }
    }

    /// Override the exclusion threshold (samples strictly above it leave).
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, CurriculumError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(CurriculumError::Config(format!("threshold must lie in [0, 1], got {threshold}")));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn active_pool(&self) -> &BTreeSet<String> {
        &self.active_pool
    }

    pub fn recorded_iou(&self) -> &BTreeMap<String, f64> {
        &self.recorded_iou
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn removed_log(&self) -> &[Removal] {
        &self.removed_log
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_active(&self, id: &str) -> bool {
        self.active_pool.contains(id)
    }

    /// Record this epoch's per-sample statistics and drop every active sample
    /// whose statistic is strictly above the threshold. The state is left
    /// untouched if any value is outside `[0, 1]`.
    pub fn epoch_filter(&mut self, epoch_ious: &BTreeMap<String, f64>) -> Result<EpochFilterReport, CurriculumError> {
        if let Some((id, &value)) = epoch_ious.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(CurriculumError::BadIou { id: id.clone(), value });
        }
        let epoch = self.epoch;
        let mut report = EpochFilterReport { epoch, ..Default::default() };
        for (id, &iou) in epoch_ious {
            if !self.active_pool.contains(id) {
                log::warn!("epoch {epoch}: ignoring statistic for inactive sample {id}");
                report.ignored.push(id.clone());
                continue;
            }
            self.recorded_iou.insert(id.clone(), iou);
            report.scored.insert(id.clone(), iou);
            if iou > self.threshold {
                self.active_pool.remove(id);
                let removal = Removal { epoch, id: id.clone(), iou };
                self.removed_log.push(removal.clone());
                report.removed.push(removal);
            }
        }
        report.unscored = self
            .active_pool
            .iter()
            .filter(|id| !epoch_ious.contains_key(*id))
            .cloned()
            .collect();
        self.epoch += 1;
        Ok(report)
    }
}

/// Write removals as CSV with an `epoch,id,iou` header.
pub fn write_removed_log_csv<W: Write>(log: &[Removal], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "id", "iou"])?;
    for r in log {
        w.write_record([r.epoch.to_string(), r.id.clone(), r.iou.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ious(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
        items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn strict_threshold() {
        let mut s = CurriculumState::new(["a", "b"]);
        let r = s.epoch_filter(&ious(&[("a", 0.71), ("b", 0.70)])).unwrap();
        assert_eq!(r.removed.len(), 1);
        assert_eq!(r.removed[0].id, "a");
        assert!(s.is_active("b"));
        assert_eq!(s.epoch(), 1);
    }

    #[test]
    fn rule_application() {
        let mut s = CurriculumState::new(["a", "b", "c"]);
        s.epoch_filter(&ious(&[("a", 0.9), ("b", 0.2), ("c", 0.75)])).unwrap();
        assert_eq!(s.active_pool().iter().collect::<Vec<_>>(), vec!["b"]);
        let removed: Vec<_> = s.removed_log().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(removed, vec!["a", "c"]);
    }

    #[test]
    fn inactive_ids_are_ignored_and_never_return() {
        let mut s = CurriculumState::new(["a", "b"]);
        s.epoch_filter(&ious(&[("a", 0.95), ("b", 0.1)])).unwrap();
        let r = s.epoch_filter(&ious(&[("a", 0.0), ("zzz", 0.1)])).unwrap();
        assert_eq!(r.ignored, vec!["a".to_string(), "zzz".to_string()]);
        assert_eq!(r.unscored, vec!["b".to_string()]);
        assert!(!s.is_active("a"));
        assert_eq!(s.epoch(), 2);
    }

    #[test]
    fn out_of_range_statistic_leaves_state_untouched() {
        let mut s = CurriculumState::new(["a"]);
        let before = s.clone();
        assert!(matches!(s.epoch_filter(&ious(&[("a", 1.5)])), Err(CurriculumError::BadIou { .. })));
        assert_eq!(s, before);
    }

    #[test]
    fn statistics() {
        assert_eq!(IouStatistic::Max.reduce(&[0.1, 0.8, 0.3]), Some(0.8));
        assert!((IouStatistic::Mean.reduce(&[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(IouStatistic::Max.reduce(&[]), None);
    }

    #[test]
    fn csv_export() {
        let log = vec![Removal { epoch: 0, id: "a,b".into(), iou: 0.75 }];
        let mut buf = Vec::new();
        write_removed_log_csv(&log, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,id,iou\n0,\"a,b\",0.75\n");
    }
}
