//! `tempora synth`: write the seeded synthetic datasets.

use clap::{Args, ValueEnum};
use serde_json::json;
use tempora_core::synth;

use super::{Context, Outcome};
use crate::error::CliError;
use crate::output::Staged;

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    /// Number of records; each kind has its own default.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// The fixed 16-sample training set (ignores --count and --seed).
    TrainingSet,
    /// Samples with uniform difficulty, default 100000.
    DifficultyPool,
    /// Curation candidates from three sources, default 12000.
    BenchmarkPool,
    /// Captioned sources for the cold-start builder, default 150.
    ColdStart,
}

const BENCHMARK_SOURCES: [(&str, f64); 3] = [("charades", 0.4), ("activitynet", 0.3), ("mixed", 0.3)];

pub fn run(ctx: &Context, args: &SynthArgs) -> Result<Outcome, CliError> {
    let out = ctx.require_output("synth writes a JSON-Lines file")?;
    let mut files = Staged::new();
    let n = match args.kind {
        SynthKind::TrainingSet => {
            let items = synth::training_set();
            files.write_jsonl(out, &items)?;
            items.len()
        }
        SynthKind::DifficultyPool => {
            let items = synth::uniform_difficulty_pool(args.count.unwrap_or(100_000), ctx.seed);
            files.write_jsonl(out, &items)?;
            items.len()
        }
        SynthKind::BenchmarkPool => {
            let items = synth::benchmark_pool(args.count.unwrap_or(12_000), &BENCHMARK_SOURCES, ctx.seed);
            files.write_jsonl(out, &items)?;
            items.len()
        }
        SynthKind::ColdStart => {
            let items = synth::cold_start_sources(args.count.unwrap_or(150), ctx.seed);
            files.write_jsonl(out, &items)?;
            items.len()
        }
    };
    let kind = args.kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let text = format!("wrote {n} {kind} record(s) to {}\n", out.display());
    Ok(Outcome::new(json!({ "kind": kind, "count": n, "seed": ctx.seed }), text, files))
}
