//! Run configuration shared by every subcommand.
//!
//! Files ending in `.json` are read as JSON, anything else as TOML; both map
//! onto the same structure. Command-line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tempora_core::curriculum::FilterSpec;
use tempora_core::eval::{CurationTargets, DurationBuckets, DEFAULT_THRESHOLDS};
use tempora_core::policy::TrainerConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub thresholds: Vec<f64>,
    pub duration_edges: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { thresholds: DEFAULT_THRESHOLDS.to_vec(), duration_edges: vec![0.0, 60.0, 120.0, 180.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSettings {
    pub max_concurrency: usize,
    /// External annotator program and arguments; empty means the built-in
    /// keyword annotator.
    pub command: Vec<String>,
}

impl Default for AnnotationSettings {
    fn default() -> Self {
        Self { max_concurrency: 4, command: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; overrides `trainer.seed` when set.
    pub seed: Option<u64>,
    pub trainer: TrainerConfig,
    pub filter: FilterSpec,
    pub curation: CurationTargets,
    pub evaluation: EvalSettings,
    pub annotation: AnnotationSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))
    }

    /// Seed every seeded operation uses.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.trainer.seed)
    }

    pub fn duration_buckets(&self) -> Result<DurationBuckets, CliError> {
        Ok(DurationBuckets::new(self.evaluation.duration_edges.clone())?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.trainer.validate()?;
        self.filter.validate()?;
        self.curation.validate()?;
        self.duration_buckets()?;
        if let Some(t) = self.evaluation.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(CliError::invalid(format!("evaluation threshold {t} outside [0, 1]")));
        }
        if self.evaluation.thresholds.is_empty() {
            return Err(CliError::invalid("at least one evaluation threshold is required"));
        }
        if self.annotation.max_concurrency == 0 {
            return Err(CliError::invalid("annotation.max_concurrency must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_are_equivalent() {
        let toml_text = r#"
seed = 3
[trainer]
steps = 40
[trainer.grpo]
aggregation = "sample_level"
[filter]
strategy = "uniform"
[curation.category_shares]
HAS = 0.5
OT = 0.5
"#;
        let json_text = r#"{"seed":3,"trainer":{"steps":40,"grpo":{"aggregation":"sample_level"}},
            "filter":{"strategy":"uniform"},"curation":{"category_shares":{"HAS":0.5,"OT":0.5}}}"#;
        let a: RunConfig = toml::from_str(toml_text).unwrap();
        let b: RunConfig = serde_json::from_str(json_text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.effective_seed(), 3);
        a.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[trainer]\nstepz = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
    }
}
