//! `tempora score`: reward every response in a JSON-Lines file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use tempora_core::jsonl::{read_lines, ResponseRecord, RewardRecord};
use tempora_core::numeric::mean;
use tempora_core::{parse_response, total_reward};

use super::{fmt4, load_samples, table, Context, Outcome};
use crate::error::CliError;
use crate::output::{open_input, Staged};

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Responses, one `{"sample_id", "text"}` object per line.
    #[arg(long)]
    pub responses: PathBuf,
    /// Samples the responses refer to.
    #[arg(long)]
    pub samples: PathBuf,
}

pub fn run(ctx: &Context, args: &ScoreArgs) -> Result<Outcome, CliError> {
    let samples = load_samples(&args.samples)?;
    let by_id: BTreeMap<&str, _> = samples.iter().map(|s| (s.sample_id(), s)).collect();
    let lines = read_lines::<ResponseRecord, _>(open_input(&args.responses)?)?;

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (line, parsed) in lines {
        let rec = match parsed {
            Ok(r) => r,
            Err(e) => {
                errors.push(json!({ "line": line, "error": e.to_string() }));
                continue;
            }
        };
        let Some(sample) = by_id.get(rec.sample_id.as_str()) else {
            errors.push(json!({ "line": line, "error": format!("line {line}: unknown sample {}", rec.sample_id) }));
            continue;
        };
        let reward = total_reward(&parse_response(&rec.text), &sample.gt, sample.duration);
        records.push(RewardRecord { line, sample_id: rec.sample_id, reward });
    }
    for e in &errors {
        log::error!("{}", e["error"].as_str().unwrap_or_default());
    }

    let n = records.len();
    let mean_total = mean(records.iter().map(|r| r.reward.total)).unwrap_or(0.0);
    let mean_tiou = mean(records.iter().map(|r| r.reward.tiou)).unwrap_or(0.0);
    let format_rate = mean(records.iter().map(|r| f64::from(r.reward.format))).unwrap_or(0.0);
    let summary = json!({
        "n": n,
        "failed": errors.len(),
        "mean_total": mean_total,
        "mean_tiou": mean_tiou,
        "format_rate": format_rate,
        "errors": errors,
    });
    let text = table(&[
        vec!["n".into(), "failed".into(), "mean_total".into(), "mean_tiou".into(), "format_rate".into()],
        vec![n.to_string(), errors.len().to_string(), fmt4(mean_total), fmt4(mean_tiou), fmt4(format_rate)],
    ]);

    let mut files = Staged::new();
    if let Some(out) = &ctx.output {
        files.write_jsonl(out, &records)?;
    }
    let mut outcome = Outcome::new(summary, text, files);
    outcome.partial_failure = n == 0 || !errors.is_empty();
    Ok(outcome)
}
