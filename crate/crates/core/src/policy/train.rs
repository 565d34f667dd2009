use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    analytic_gradient, rollout, stream_rng, ExpectedReward, GridPolicy, PolicyError, RewardTable, SimRollout, Token,
    DEFAULT_GRID_SIZE, DEFAULT_MAX_THINK_LEN, DEFAULT_VOCAB,
};
use crate::curriculum::{CurriculumState, EpochFilterReport, IouStatistic, Removal, DEFAULT_EASY_THRESHOLD};
use crate::grpo::{grpo_objective, GrpoConfig, RolloutGroup};
use crate::numeric::mean;
use crate::reward::iou;
use crate::span::GroundingSample;

use super::Channel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Optimization steps per epoch.
    pub steps: usize,
    /// Gradient-ascent step size. Zero freezes the policy. Large values of
    /// `learning_rate * grpo.beta` (around 40 and up on the demo set) make the
    /// penalty term overshoot.
    pub learning_rate: f64,
    pub seed: u64,
    pub grpo: GrpoConfig,
    pub epochs: usize,
    /// Drop samples whose epoch IoU statistic exceeds `easy_threshold`.
    pub curriculum: bool,
    pub iou_statistic: IouStatistic,
    pub easy_threshold: f64,
    /// Score the curriculum with the greedy span of the updated policy
    /// instead of the epoch's last rollouts.
    pub rescore: bool,
    pub grid_size: usize,
    pub max_think_len: usize,
    pub vocab: Vec<String>,
    /// Initial think-length logits are `-short_think_bias * len`.
    pub short_think_bias: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 8.0,
            seed: 7,
            grpo: GrpoConfig::default(),
            epochs: 1,
            curriculum: false,
            iou_statistic: IouStatistic::Max,
            easy_threshold: DEFAULT_EASY_THRESHOLD,
            rescore: false,
            grid_size: DEFAULT_GRID_SIZE,
            max_think_len: DEFAULT_MAX_THINK_LEN,
            vocab: DEFAULT_VOCAB.iter().map(|w| w.to_string()).collect(),
            short_think_bias: 0.0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        self.grpo.validate()?;
        if self.steps == 0 {
            return Err(PolicyError::Config("steps must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(PolicyError::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(PolicyError::Config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.easy_threshold) {
            return Err(PolicyError::Config(format!("easy_threshold must lie in [0, 1], got {}", self.easy_threshold)));
        }
        if !self.short_think_bias.is_finite() {
            return Err(PolicyError::Config("short_think_bias must be finite".into()));
        }
        Ok(())
    }
}

/// Statistics of one optimization step, measured on the rollouts drawn
/// before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub pool_size: usize,
    pub mean_total: f64,
    pub mean_tiou: f64,
    pub mean_iou: f64,
    pub format_rate: f64,
    pub mean_think_tokens: f64,
    pub kl: f64,
    pub objective: f64,
    pub grad_norm: f64,
    /// Exact expected total reward of the pre-update policy over the pool.
    pub expected_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub config: TrainerConfig,
    pub records: Vec<StepRecord>,
    /// Expected rewards over all training samples before the first update.
    pub initial_expected: ExpectedReward,
    /// Expected rewards over all training samples after the last update.
    pub final_expected: ExpectedReward,
    pub epoch_filters: Vec<EpochFilterReport>,
    pub removed_log: Vec<Removal>,
    pub final_pool: Vec<String>,
    pub final_policy: GridPolicy,
}

/// Everything in a [`TrainingReport`] except the step records and the policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingSummary<'a> {
    pub config: &'a TrainerConfig,
    pub steps_run: usize,
    pub initial_expected: ExpectedReward,
    pub final_expected: ExpectedReward,
    pub last_step: Option<&'a StepRecord>,
    pub epoch_filters: &'a [EpochFilterReport],
    pub removed_log: &'a [Removal],
    pub final_pool: &'a [String],
}

impl TrainingReport {
    pub fn summary(&self) -> TrainingSummary<'_> {
        TrainingSummary {
            config: &self.config,
            steps_run: self.records.len(),
            initial_expected: self.initial_expected,
            final_expected: self.final_expected,
            last_step: self.records.last(),
            epoch_filters: &self.epoch_filters,
            removed_log: &self.removed_log,
            final_pool: &self.final_pool,
        }
    }

    /// One JSON object per step.
    pub fn write_records_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn mean_expected(tables: &[(String, RewardTable)], policy: &GridPolicy, active: &BTreeSet<String>) -> Result<ExpectedReward, PolicyError> {
    let mut parts = Vec::new();
    for (id, table) in tables.iter().filter(|(id, _)| active.contains(id)) {
        parts.push(table.expected(policy, id)?);
    }
    let avg = |f: fn(&ExpectedReward) -> f64| mean(parts.iter().map(f)).unwrap_or(0.0);
    Ok(ExpectedReward { total: avg(|e| e.total), tiou: avg(|e| e.tiou), iou: avg(|e| e.iou), format_rate: avg(|e| e.format_rate) })
}

fn step_stats(rollouts: &[SimRollout]) -> (f64, f64, f64, f64, f64) {
    let responses = || rollouts.iter().flat_map(|r| &r.group.responses);
    let think = |tokens: &Vec<Token>| tokens.iter().filter(|t| t.channel == Channel::ThinkWord).count() as f64;
    (
        mean(responses().map(|r| r.reward.total)).unwrap_or(0.0),
        mean(responses().map(|r| r.reward.tiou)).unwrap_or(0.0),
        mean(responses().map(|r| r.reward.iou)).unwrap_or(0.0),
        mean(responses().map(|r| f64::from(r.reward.format))).unwrap_or(0.0),
        mean(rollouts.iter().flat_map(|r| &r.tokens).map(think)).unwrap_or(0.0),
    )
}

/// Train a fresh uniform policy on `samples`.
pub fn train(samples: &[GroundingSample], cfg: &TrainerConfig) -> Result<TrainingReport, PolicyError> {
    cfg.validate()?;
    let policy = GridPolicy::uniform(cfg.grid_size, cfg.max_think_len, &cfg.vocab, samples.iter().map(|s| s.sample_id().to_string()))?
        .with_short_think_bias(cfg.short_think_bias);
    train_from(policy, samples, cfg)
}

/// Train starting from `policy`, which also serves as the frozen reference.
///
/// Every step draws `group_size` rollouts per active sample, evaluates the
/// objective and takes one gradient-ascent step. With the curriculum on, the
/// IoU statistic of each active sample is computed at the end of every epoch
/// and samples above the threshold leave the pool for good.
pub fn train_from(mut policy: GridPolicy, samples: &[GroundingSample], cfg: &TrainerConfig) -> Result<TrainingReport, PolicyError> {
    cfg.validate()?;
    policy.validate()?;
    if samples.is_empty() {
        return Err(PolicyError::EmptySamples);
    }
    let mut seen = BTreeSet::new();
    for s in samples {
        let id = s.sample_id();
        s.validate().map_err(|e| PolicyError::InvalidSample(id.to_string(), e))?;
        if !seen.insert(id.to_string()) {
            return Err(PolicyError::DuplicateSample(id.to_string()));
        }
        policy.span_table(id)?;
    }
    let reference = policy.clone();
    let tables: Vec<(String, RewardTable)> = samples
        .par_iter()
        .map(|s| RewardTable::new(&policy, s).map(|t| (s.sample_id().to_string(), t)))
        .collect::<Result<_, _>>()?;
    let all_ids = seen.clone();
    let initial_expected = mean_expected(&tables, &policy, &all_ids)?;

    let mut state = CurriculumState::new(seen.iter().cloned()).with_threshold(cfg.easy_threshold)?;
    let mut records = Vec::with_capacity(cfg.steps * cfg.epochs);
    let mut epoch_filters = Vec::new();

    'epochs: for epoch in 0..cfg.epochs {
        let mut last_rollouts: Vec<SimRollout> = Vec::new();
        for local in 0..cfg.steps {
            let step = epoch * cfg.steps + local;
            let active: Vec<&GroundingSample> = samples.iter().filter(|s| state.is_active(s.sample_id())).collect();
            let rollouts: Vec<SimRollout> = active
                .par_iter()
                .map(|s| {
                    let mut rng = stream_rng(cfg.seed, s.sample_id(), step as u64);
                    rollout(&policy, &reference, s, cfg.grpo.group_size, &mut rng)
                })
                .collect::<Result<_, _>>()?;
            let groups: Vec<RolloutGroup> = rollouts.iter().map(|r| r.group.clone()).collect();
            let objective = grpo_objective(&groups, &cfg.grpo)?;
            let grad = analytic_gradient(&policy, &rollouts, &objective.weights)?;
            let expected_total = mean_expected(&tables, &policy, state.active_pool())?.total;
            let (mean_total, mean_tiou, mean_iou, format_rate, mean_think_tokens) = step_stats(&rollouts);
            records.push(StepRecord {
                epoch,
                step,
                pool_size: active.len(),
                mean_total,
                mean_tiou,
                mean_iou,
                format_rate,
                mean_think_tokens,
                kl: objective.mean_kl,
                objective: objective.value,
                grad_norm: grad.norm(),
                expected_total,
            });
            policy.ascend(&grad, cfg.learning_rate)?;
            last_rollouts = rollouts;
        }
        if cfg.curriculum {
            let stats = epoch_statistics(&policy, samples, &state, &last_rollouts, cfg)?;
            let report = state.epoch_filter(&stats)?;
            log::info!("epoch {epoch}: removed {} samples, {} remain", report.removed.len(), state.active_pool().len());
            epoch_filters.push(report);
            if state.active_pool().is_empty() {
                log::info!("every sample solved after epoch {epoch}");
                break 'epochs;
            }
        }
    }

    let final_expected = mean_expected(&tables, &policy, &all_ids)?;
    Ok(TrainingReport {
        config: cfg.clone(),
        records,
        initial_expected,
        final_expected,
        epoch_filters,
        removed_log: state.removed_log().to_vec(),
        final_pool: state.active_pool().iter().cloned().collect(),
        final_policy: policy,
    })
}

fn epoch_statistics(
    policy: &GridPolicy,
    samples: &[GroundingSample],
    state: &CurriculumState,
    last_rollouts: &[SimRollout],
    cfg: &TrainerConfig,
) -> Result<BTreeMap<String, f64>, PolicyError> {
    let mut stats = BTreeMap::new();
    if cfg.rescore {
        for s in samples.iter().filter(|s| state.is_active(s.sample_id())) {
            let pred = policy.greedy_span(s)?;
            let value = iou(&pred, &s.gt).map_err(|e| PolicyError::InvalidSample(s.sample_id().to_string(), e))?;
            stats.insert(s.sample_id().to_string(), value);
        }
    } else {
        for ro in last_rollouts {
            let ious: Vec<f64> = ro.group.responses.iter().map(|r| r.reward.iou).collect();
            if let Some(v) = cfg.iou_statistic.reduce(&ious) {
                stats.insert(ro.group.sample_id.clone(), v);
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::span::TimeSpan;

    fn samples() -> Vec<GroundingSample> {
        vec![
            GroundingSample::new("a", 40.0, "q", TimeSpan::raw(10.0, 20.0)),
            GroundingSample::new("b", 80.0, "q", TimeSpan::raw(0.0, 30.0)),
            GroundingSample::new("c", 24.0, "q", TimeSpan::raw(15.0, 24.0)),
        ]
    }

    fn quick(steps: usize) -> TrainerConfig {
        TrainerConfig { steps, ..Default::default() }
    }

    #[test]
    fn config_validation() {
        assert!(train(&samples(), &TrainerConfig { steps: 0, ..Default::default() }).is_err());
        assert!(train(&samples(), &TrainerConfig { learning_rate: -1.0, ..Default::default() }).is_err());
        assert!(train(&[], &quick(1)).is_err());
        let mut dup = samples();
        dup.push(dup[0].clone());
        assert!(matches!(train(&dup, &quick(1)), Err(PolicyError::DuplicateSample(_))));
    }

    #[test]
    fn training_is_reproducible() {
        let a = train(&samples(), &quick(20)).unwrap();
        let b = train(&samples(), &quick(20)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 20);
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let cfg = TrainerConfig { learning_rate: 0.0, ..quick(5) };
        let r = train(&samples(), &cfg).unwrap();
        assert_eq!(r.initial_expected, r.final_expected);
        assert!(r.records.iter().all(|x| x.expected_total == r.records[0].expected_total));
        assert!(r.records.iter().all(|x| x.kl == 0.0));
        let initial = GridPolicy::uniform(8, 6, &DEFAULT_VOCAB, ["a", "b", "c"]).unwrap();
        assert_eq!(r.final_policy, initial);
    }

    #[test]
    fn probabilities_stay_normalized() {
        let r = train(&samples(), &quick(50)).unwrap();
        let p = &r.final_policy;
        let sums = [crate::numeric::compensated_sum(p.template_probs()), crate::numeric::compensated_sum(p.think_length_probs())]
            .into_iter()
            .chain(p.span_logits.keys().map(|id| crate::numeric::compensated_sum(p.span_probs(id).unwrap())));
        for s in sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn curriculum_only_removes_easy_samples() {
        let cfg = TrainerConfig { epochs: 3, curriculum: true, ..quick(60) };
        let r = train(&samples(), &cfg).unwrap();
        assert!(r.removed_log.iter().all(|x| x.iou > 0.7));
        let sizes: Vec<usize> = r.records.iter().map(|x| x.pool_size).collect();
        assert!(sizes.windows(2).all(|w| w[1] <= w[0]));
    }
}
