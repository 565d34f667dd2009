//! Subcommand implementations. Each command reads and validates all of its
//! inputs, computes its results, and only then stages output files.

pub mod annotate;
pub mod cold_start;
pub mod curate;
pub mod evaluate;
pub mod filter;
pub mod objective;
pub mod parse_check;
pub mod score;
pub mod synth;
pub mod train_sim;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tempora_core::jsonl::read_all;
use tempora_core::GroundingSample;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{open_input, Staged};

/// Resolved settings handed to every command.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Context {
    pub fn require_output(&self, what: &str) -> Result<&Path, CliError> {
        self.output.as_deref().ok_or_else(|| CliError::invalid(format!("--output is required ({what})")))
    }
}

/// What a command hands back to `main`.
pub struct Outcome {
    pub json: Value,
    pub table: String,
    pub files: Staged,
    /// Outputs are still written, but the process exits with code 1.
    pub partial_failure: bool,
}

impl Outcome {
    pub fn new(json: Value, table: String, files: Staged) -> Self {
        Self { json, table, files, partial_failure: false }
    }
}

/// Read a sample file, rejecting invalid spans and duplicate ids.
pub fn load_samples(path: &Path) -> Result<Vec<GroundingSample>, CliError> {
    let samples: Vec<GroundingSample> =
        read_all(open_input(path)?).map_err(|e| with_file(path, e.into()))?;
    let mut seen = BTreeSet::new();
    for (i, s) in samples.iter().enumerate() {
        s.validate()
            .map_err(|e| CliError::invalid(format!("{}: sample {}: {e}", path.display(), s.sample_id())))?;
        if !seen.insert(s.sample_id()) {
            return Err(CliError::invalid(format!(
                "{}: duplicate sample id {} (record {})",
                path.display(),
                s.sample_id(),
                i + 1
            )));
        }
    }
    Ok(samples)
}

pub fn with_file(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        CliError::Io { context, source } => CliError::Io { context: format!("{}: {context}", path.display()), source },
        other => other,
    }
}

/// Fixed-width text table; the first row is the header.
pub fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = widths[c])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}

pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}
