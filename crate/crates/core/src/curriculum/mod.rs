//! Training-data curation: difficulty scoring, difficulty-aware subset
//! selection, per-epoch removal of solved samples, and cold-start target
//! construction.

mod cold_start;
mod difficulty;
mod epoch;
mod filter;

pub use cold_start::{build_cold_start, grounding_prompt, ColdStartOutcome, ColdStartPair, ColdStartSource, DEFAULT_COLD_START_SIZE};
pub use difficulty::{score_difficulty, DifficultyScores};
pub use epoch::{write_removed_log_csv, CurriculumState, EpochFilterReport, IouStatistic, Removal, DEFAULT_EASY_THRESHOLD};
pub use filter::{difficulty_bin, difficulty_histogram, filter_pool, FilterSpec, FilterStrategy, DIFFICULTY_BINS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurriculumError {
    #[error("sample pool is empty")]
    EmptyPool,
    #[error("sample {0} has no difficulty score")]
    MissingDifficulty(String),
    #[error("IoU statistic {value} for sample {id} lies outside [0, 1]")]
    BadIou { id: String, value: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}
