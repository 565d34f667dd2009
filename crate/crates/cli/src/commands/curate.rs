//! `tempora curate`: draw a balanced benchmark from a candidate pool.

use std::path::PathBuf;

use clap::Args;
use tempora_core::eval::curate;

use super::{fmt4, load_samples, table, Context, Outcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Staged;

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Candidate pool with `source` and `category` filled in.
    #[arg(long)]
    pub pool: PathBuf,
    /// Benchmark size.
    #[arg(long)]
    pub total: Option<usize>,
    /// Allowed absolute deviation from each target share.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

impl CurateArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = self.total {
            cfg.curation.total = t;
        }
        if let Some(t) = self.tolerance {
            cfg.curation.tolerance = t;
        }
    }
}

pub fn run(ctx: &Context, args: &CurateArgs) -> Result<Outcome, CliError> {
    let pool = load_samples(&args.pool)?;
    let outcome = curate(&pool, &ctx.config.curation, ctx.seed)?;
    let report = &outcome.report;
    if !report.within_tolerance {
        log::warn!("curated benchmark misses at least one target share by more than {}", report.tolerance);
    }

    let mut rows = vec![vec!["family".into(), "value".into(), "target".into(), "achieved".into(), "count".into()]];
    for fam in &report.families {
        for v in &fam.values {
            rows.push(vec![
                format!("{:?}", fam.family).to_lowercase(),
                v.value.clone(),
                fmt4(v.target_share),
                fmt4(v.achieved_share),
                v.achieved_count.to_string(),
            ]);
        }
    }
    let text = format!(
        "selected {} of {} requested (within tolerance: {})\n{}",
        report.selected,
        report.requested,
        report.within_tolerance,
        table(&rows)
    );

    let mut files = Staged::new();
    if let Some(dir) = &ctx.output {
        files.write_jsonl(&dir.join("curated.jsonl"), &outcome.selected)?;
        files.write_json(&dir.join("balance.json"), report)?;
    }
    let json = serde_json::to_value(report).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(Outcome::new(json, text, files))
}
