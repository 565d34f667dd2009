//! `tempora annotate` labels sample queries with semantic categories;
//! `tempora annotate-serve` exposes the keyword annotator over the line
//! protocol so it can stand in for an external service.

use std::path::PathBuf;
use std::process::Command;

use clap::Args;
use serde_json::json;
use tempora_core::eval::{annotate_categories, serve_lines, AnnotatorClient, KeywordAnnotator, Label, StdioAnnotator};

use super::{load_samples, table, Context, Outcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Staged;

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// Annotator program speaking the line protocol on stdin/stdout,
    /// followed by its arguments (whitespace separated, no quoting).
    #[arg(long)]
    pub command: Option<String>,
    /// Maximum requests in flight.
    #[arg(long)]
    pub concurrency: Option<usize>,
}

impl AnnotateArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(c) = &self.command {
            cfg.annotation.command = c.split_whitespace().map(str::to_string).collect();
        }
        if let Some(n) = self.concurrency {
            cfg.annotation.max_concurrency = n;
        }
    }
}

pub fn run(ctx: &Context, args: &AnnotateArgs) -> Result<Outcome, CliError> {
    let mut samples = load_samples(&args.samples)?;
    let settings = &ctx.config.annotation;
    let client: Box<dyn AnnotatorClient> = match settings.command.split_first() {
        None => Box::new(KeywordAnnotator),
        Some((program, rest)) => {
            let mut cmd = Command::new(program);
            cmd.args(rest);
            Box::new(StdioAnnotator::spawn(cmd).map_err(|e| CliError::io(format!("starting annotator {program}"), e))?)
        }
    };
    let queries: Vec<String> = samples.iter().map(|s| s.query.clone()).collect();
    let report = annotate_categories(&queries, client.as_ref(), settings.max_concurrency);

    let mut labeled = 0usize;
    for s in &mut samples {
        if let Some(Label::Category(c)) = report.labels.get(&s.query) {
            s.category = Some(*c);
            labeled += 1;
        }
    }
    for e in &report.errors {
        log::warn!("annotation of {:?} failed: {:?}", e.query, e.failure);
    }
    let text = table(&[
        vec!["samples".into(), "labeled".into(), "errors".into(), "retries".into()],
        vec![samples.len().to_string(), labeled.to_string(), report.errors.len().to_string(), report.retries.to_string()],
    ]);
    let json = json!({ "samples": samples.len(), "labeled": labeled, "report": report });
    let mut files = Staged::new();
    if let Some(out) = &ctx.output {
        files.write_jsonl(out, &samples)?;
    }
    Ok(Outcome::new(json, text, files))
}

pub fn serve() -> Result<usize, CliError> {
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    serve_lines(&KeywordAnnotator, stdin, stdout).map_err(|e| CliError::io("serving annotations", e))
}
