//! `tempora evaluate`: R1@m and mIoU with per-slice breakdowns.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use tempora_core::eval::evaluate_with_buckets;
use tempora_core::jsonl::{read_all, PredictionRecord};

use super::{load_samples, Context, Outcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{open_input, Staged};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// One `{"sample_id", "pred": [s, e]}` or `{"sample_id", "miss": true}` per line.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

impl EvaluateArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = &self.thresholds {
            cfg.evaluation.thresholds = t.clone();
        }
    }
}

pub fn run(ctx: &Context, args: &EvaluateArgs) -> Result<Outcome, CliError> {
    let samples = load_samples(&args.samples)?;
    let records: Vec<PredictionRecord> = read_all(open_input(&args.predictions)?)?;
    let mut predictions = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let p = r.to_prediction().map_err(|e| CliError::invalid(format!("{}: record {}: {e}", args.predictions.display(), i + 1)))?;
        if predictions.insert(r.sample_id.clone(), p).is_some() {
            return Err(CliError::invalid(format!(
                "{}: duplicate prediction for {}",
                args.predictions.display(),
                r.sample_id
            )));
        }
    }
    let buckets = ctx.config.duration_buckets()?;
    let report = evaluate_with_buckets(&predictions, &samples, &ctx.config.evaluation.thresholds, &buckets)?;

    let mut files = Staged::new();
    if let Some(out) = &ctx.output {
        files.write_json(out, &report)?;
    }
    let json = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(Outcome::new(json, report.to_table(), files))
}
