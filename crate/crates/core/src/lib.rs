//! Verifiable rewards, group-relative policy optimization and curriculum
//! tooling for temporal video grounding.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`span`] and [`reward`]: spans, samples, IoU and timestamp-aware IoU.
//! * [`grammar`]: the think/answer response template and caption format.
//! * [`grpo`]: advantages, KL penalty and the surrogate objective.
//! * [`policy`]: a toy grid policy with exact gradients and a trainer.
//! * [`curriculum`]: difficulty scoring, subset filtering, epoch pruning.
//! * [`eval`]: metrics, semantic categories, benchmark curation.
//! * [`jsonl`] and [`synth`]: file formats and synthetic data.

pub mod curriculum;
pub mod eval;
pub mod grammar;
pub mod grpo;
pub mod jsonl;
pub mod numeric;
pub mod policy;
pub mod reward;
pub mod span;
pub mod synth;

pub use grammar::{format_reward, parse_response, ParseOutcome};
pub use grpo::{grpo_objective, normalize_advantages, Aggregation, GrpoConfig, RolloutGroup};
pub use reward::{iou, tiou, total_reward, RewardBreakdown};
pub use span::{GroundingSample, SpanError, TimeSpan};
