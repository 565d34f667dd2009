//! `tempora objective`: evaluate the GRPO objective on recorded rollouts.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use tempora_core::grpo::{grpo_objective, RolloutGroup};
use tempora_core::jsonl::read_all;
use tempora_core::Aggregation;

use super::train_sim::AggregationArg;
use super::{table, Context, Outcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{open_input, Staged};

#[derive(Debug, Args)]
pub struct ObjectiveArgs {
    /// One rollout group per line.
    #[arg(long)]
    pub rollouts: PathBuf,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    #[arg(long)]
    pub clip_epsilon: Option<f64>,
}

impl ObjectiveArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let g = &mut cfg.trainer.grpo;
        if let Some(b) = self.beta {
            g.beta = b;
        }
        if let Some(a) = self.aggregation {
            g.aggregation = match a {
                AggregationArg::SampleLevel => Aggregation::SampleLevel,
                AggregationArg::TokenLevel => Aggregation::TokenLevel,
            };
        }
        if self.clip_epsilon.is_some() {
            g.clip_epsilon = self.clip_epsilon;
        }
    }
}

pub fn run(ctx: &Context, args: &ObjectiveArgs) -> Result<Outcome, CliError> {
    let groups: Vec<RolloutGroup> = read_all(open_input(&args.rollouts)?)?;
    let cfg = &ctx.config.trainer.grpo;
    let obj = grpo_objective(&groups, cfg)?;
    let json = json!({
        "aggregation": cfg.aggregation,
        "beta": cfg.beta,
        "value": obj.value,
        "mean_kl": obj.mean_kl,
        "token_count": obj.token_count,
        "weights": obj.weights,
    });
    let text = table(&[
        vec!["aggregation".into(), "value".into(), "mean_kl".into(), "tokens".into()],
        vec![format!("{:?}", cfg.aggregation), format!("{:.6}", obj.value), format!("{:.6}", obj.mean_kl), obj.token_count.to_string()],
    ]);
    let mut files = Staged::new();
    if let Some(out) = &ctx.output {
        files.write_json(out, &json)?;
    }
    Ok(Outcome::new(json, text, files))
}
