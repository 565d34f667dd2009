//! `tempora parse-check`: template conformance of a file of responses.

use std::path::PathBuf;

use clap::Args;
use serde_json::{json, Value};
use tempora_core::jsonl::read_lines;
use tempora_core::{format_reward, parse_response};

use super::{table, Context, Outcome};
use crate::error::CliError;
use crate::output::{open_input, Staged};

#[derive(Debug, Args)]
pub struct ParseCheckArgs {
    /// JSON-Lines file whose objects carry the response in `text` or `target`.
    #[arg(long)]
    pub input: PathBuf,
}

pub fn run(ctx: &Context, args: &ParseCheckArgs) -> Result<Outcome, CliError> {
    let lines = read_lines::<Value, _>(open_input(&args.input)?)?;
    let mut checked = 0usize;
    let mut format_ok = 0usize;
    let mut failures = Vec::new();
    let mut unreadable = Vec::new();
    for (line, parsed) in lines {
        let text = parsed
            .map_err(|e| e.to_string())
            .and_then(|v| {
                ["text", "target"]
                    .iter()
                    .find_map(|k| v.get(k).and_then(Value::as_str).map(str::to_string))
                    .ok_or_else(|| format!("line {line}: no string field `text` or `target`"))
            });
        match text {
            Err(e) => unreadable.push(json!({ "line": line, "error": e })),
            Ok(t) => {
                checked += 1;
                let outcome = parse_response(&t);
                if format_reward(&outcome) == 1 {
                    format_ok += 1;
                } else {
                    failures.push(json!({ "line": line, "span_recovered": outcome.span.is_some() }));
                }
            }
        }
    }
    let rate = if checked == 0 { 0.0 } else { format_ok as f64 / checked as f64 };
    let summary = json!({
        "checked": checked,
        "format_ok": format_ok,
        "format_ok_percent": 100.0 * rate,
        "failures": failures,
        "unreadable": unreadable,
    });
    let text = table(&[
        vec!["checked".into(), "format_ok".into(), "percent".into(), "unreadable".into()],
        vec![checked.to_string(), format_ok.to_string(), format!("{:.2}", 100.0 * rate), unreadable.len().to_string()],
    ]);
    let mut files = Staged::new();
    if let Some(out) = &ctx.output {
        files.write_json(out, &summary)?;
    }
    let mut outcome = Outcome::new(summary, text, files);
    outcome.partial_failure = checked == 0 || !outcome.json["unreadable"].as_array().is_none_or(Vec::is_empty);
    Ok(outcome)
}
