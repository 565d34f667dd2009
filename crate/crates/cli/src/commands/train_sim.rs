//! `tempora train-sim`: GRPO training of the simulated grid policy.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use tempora_core::curriculum::{write_removed_log_csv, IouStatistic};
use tempora_core::policy::train;
use tempora_core::synth;
use tempora_core::Aggregation;

use super::{fmt4, load_samples, table, Context, Outcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Staged;

#[derive(Debug, Args)]
pub struct TrainSimArgs {
    /// Training samples; defaults to the built-in 16-sample set.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Optimizer steps per epoch.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// KL penalty weight.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Responses per sample per step.
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Ratio clipping range; omitted means no clipping.
    #[arg(long)]
    pub clip_epsilon: Option<f64>,
    /// Number of anchor intervals per video.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Drop samples the policy already solves after each epoch.
    #[arg(long)]
    pub curriculum: bool,
    /// IoU above which a sample counts as solved.
    #[arg(long)]
    pub easy_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub iou_statistic: Option<StatisticArg>,
    /// Score samples with the greedy span instead of the last rollouts.
    #[arg(long)]
    pub rescore: bool,
    /// Initial logit bonus toward short reasoning.
    #[arg(long)]
    pub short_think_bias: Option<f64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum AggregationArg {
    SampleLevel,
    TokenLevel,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum StatisticArg {
    Max,
    Mean,
}

impl TrainSimArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.trainer;
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v.into(); })*
            };
        }
        set! {
            steps => t.steps,
            epochs => t.epochs,
            learning_rate => t.learning_rate,
            beta => t.grpo.beta,
            group_size => t.grpo.group_size,
            grid_size => t.grid_size,
            easy_threshold => t.easy_threshold,
            short_think_bias => t.short_think_bias,
        }
        if let Some(a) = self.aggregation {
            t.grpo.aggregation = match a {
                AggregationArg::SampleLevel => Aggregation::SampleLevel,
                AggregationArg::TokenLevel => Aggregation::TokenLevel,
            };
        }
        if let Some(s) = self.iou_statistic {
            t.iou_statistic = match s {
                StatisticArg::Max => IouStatistic::Max,
                StatisticArg::Mean => IouStatistic::Mean,
            };
        }
        if self.clip_epsilon.is_some() {
            t.grpo.clip_epsilon = self.clip_epsilon;
        }
        t.curriculum |= self.curriculum;
        t.rescore |= self.rescore;
    }
}

pub fn run(ctx: &Context, args: &TrainSimArgs) -> Result<Outcome, CliError> {
    let dir = ctx.require_output("train-sim writes a directory of results")?;
    let samples = match &args.samples {
        Some(p) => load_samples(p)?,
        None => synth::training_set(),
    };
    let report = train(&samples, &ctx.config.trainer)?;

    let mut files = Staged::new();
    files.write(&dir.join("report.jsonl"), |w| report.write_records_jsonl(w))?;
    files.write_json(&dir.join("summary.json"), &report.summary())?;
    files.write_json(&dir.join("checkpoint.json"), &report.final_policy)?;
    files.write(&dir.join("removed_log.csv"), |w| {
        write_removed_log_csv(&report.removed_log, w).map_err(std::io::Error::other)
    })?;

    let mut rows = vec![["epoch", "step", "pool", "total", "tiou", "format", "kl", "objective"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    let every = (report.records.len() / 10).max(1);
    for (i, r) in report.records.iter().enumerate() {
        if i % every == 0 || i + 1 == report.records.len() {
            rows.push(vec![
                r.epoch.to_string(),
                r.step.to_string(),
                r.pool_size.to_string(),
                fmt4(r.mean_total),
                fmt4(r.mean_tiou),
                fmt4(r.format_rate),
                format!("{:.2e}", r.kl),
                format!("{:.3e}", r.objective),
            ]);
        }
    }
    let text = format!(
        "{}expected total reward {} -> {}, removed {} sample(s)\n",
        table(&rows),
        fmt4(report.initial_expected.total),
        fmt4(report.final_expected.total),
        report.removed_log.len()
    );
    let json = json!({
        "output": dir,
        "steps_run": report.records.len(),
        "initial_expected": report.initial_expected,
        "final_expected": report.final_expected,
        "removed": report.removed_log,
        "final_pool": report.final_pool,
    });
    Ok(Outcome::new(json, text, files))
}
