//! `tempora cold-start`: build supervised pairs from captioned segments.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use tempora_core::curriculum::{build_cold_start, ColdStartSource, DEFAULT_COLD_START_SIZE};
use tempora_core::jsonl::read_all;

use super::{Context, Outcome};
use crate::error::CliError;
use crate::output::{open_input, Staged};

#[derive(Debug, Args)]
pub struct ColdStartArgs {
    /// Samples with their captioned `segments`, one per line.
    #[arg(long)]
    pub sources: PathBuf,
    /// Keep at most this many pairs.
    #[arg(long, default_value_t = DEFAULT_COLD_START_SIZE)]
    pub limit: usize,
}

pub fn run(ctx: &Context, args: &ColdStartArgs) -> Result<Outcome, CliError> {
    let sources: Vec<ColdStartSource> = read_all(open_input(&args.sources)?)?;
    let mut built = build_cold_start(&sources);
    built.pairs.truncate(args.limit);
    for (id, why) in &built.skipped {
        log::warn!("skipped {id}: {why}");
    }
    let text = format!("built {} pair(s), skipped {}\n", built.pairs.len(), built.skipped.len());
    let json = json!({ "pairs": built.pairs.len(), "skipped": built.skipped });
    let mut files = Staged::new();
    if let Some(out) = &ctx.output {
        files.write_jsonl(out, &built.pairs)?;
    }
    Ok(Outcome::new(json, text, files))
}
