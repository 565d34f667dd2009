//! `tempora filter`: difficulty-aware subset selection.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use tempora_core::curriculum::{difficulty_histogram, filter_pool, score_difficulty, FilterStrategy, DIFFICULTY_BINS};
use tempora_core::jsonl::{read_all, PredictionRecord};
use tempora_core::numeric::mean;

use super::{fmt4, load_samples, table, Context, Outcome};
use crate::error::CliError;
use crate::output::{open_input, Staged};

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Candidate pool. Samples need a `difficulty` unless --predictions is given.
    #[arg(long)]
    pub samples: PathBuf,
    /// Base-model predictions; each sample is scored by the IoU of its prediction.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Center of the Gaussian weight.
    #[arg(long)]
    pub mean: Option<f64>,
    /// Width of the Gaussian weight.
    #[arg(long)]
    pub spread: Option<f64>,
    /// Number of samples to keep.
    #[arg(long)]
    pub target_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum StrategyArg {
    Gaussian,
    Uniform,
    Random,
}

impl From<StrategyArg> for FilterStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Gaussian => FilterStrategy::Gaussian,
            StrategyArg::Uniform => FilterStrategy::Uniform,
            StrategyArg::Random => FilterStrategy::Random,
        }
    }
}

impl FilterArgs {
    pub fn apply(&self, cfg: &mut crate::config::RunConfig) {
        let f = &mut cfg.filter;
        if let Some(s) = self.strategy {
            f.strategy = s.into();
        }
        if let Some(m) = self.mean {
            f.mean = m;
        }
        if let Some(s) = self.spread {
            f.spread = s;
        }
        if let Some(n) = self.target_count {
            f.target_count = n;
        }
    }
}

pub fn run(ctx: &Context, args: &FilterArgs) -> Result<Outcome, CliError> {
    let mut pool = load_samples(&args.samples)?;
    let mut missing = Vec::new();
    if let Some(path) = &args.predictions {
        let records: Vec<PredictionRecord> = read_all(open_input(path)?)?;
        let mut spans = BTreeMap::new();
        for r in records {
            if let Some(span) = r.pred {
                spans.insert(r.sample_id, span);
            }
        }
        let scored = score_difficulty(&pool, &spans);
        if let Some((id, why)) = scored.invalid.first() {
            return Err(CliError::invalid(format!("{}: prediction for {id}: {why}", path.display())));
        }
        missing = scored.missing;
        pool = scored.annotated;
    }

    let selected = filter_pool(&pool, &ctx.config.filter, ctx.seed)?;
    let difficulties: Vec<f64> = selected.iter().filter_map(|s| s.difficulty).collect();
    let selected_mean = mean(difficulties.iter().copied()).unwrap_or(0.0);
    let hist = difficulty_histogram(&selected);

    let summary = json!({
        "pool": pool.len(),
        "selected": selected.len(),
        "seed": ctx.seed,
        "spec": ctx.config.filter,
        "mean_difficulty": selected_mean,
        "histogram": hist,
        "missing_predictions": missing,
    });
    let mut rows = vec![vec!["bin".to_string(), "count".to_string()]];
    for (b, count) in hist.iter().enumerate() {
        let lo = b as f64 / DIFFICULTY_BINS as f64;
        rows.push(vec![format!("[{lo:.1}, {:.1})", lo + 0.1), count.to_string()]);
    }
    let text = format!(
        "selected {} of {} (mean difficulty {})\n{}",
        selected.len(),
        pool.len(),
        fmt4(selected_mean),
        table(&rows)
    );

    let mut files = Staged::new();
    if let Some(out) = &ctx.output {
        files.write_jsonl(out, &selected)?;
    }
    Ok(Outcome::new(summary, text, files))
}
