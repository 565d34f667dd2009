//! Group-relative policy optimization over per-token log-probabilities.
//!
//! Each group holds `G` sampled responses to the same input. Rewards are
//! standardized within the group (population std), and the surrogate
//! objective combines the importance ratio against the behaviour policy with a
//! per-token KL penalty towards a frozen reference policy:
//!
//! ```text
//! f_t = ratio_t * A_i - beta * (exp(ref_t - cur_t) - (ref_t - cur_t) - 1)
//! ```
//!
//! Two aggregations are supported. `SampleLevel` averages `f_t` inside each
//! response, then over responses and groups. `TokenLevel` sums `f_t` over
//! every token in the batch and divides by the batch token count, so longer
//! responses carry proportionally more weight.
//!
//! Alongside the objective value, [`grpo_objective`] returns the derivative of
//! the objective with respect to every token's current log-probability. Any
//! policy that can differentiate its own log-probabilities can turn those
//! weights into an exact parameter gradient.

use serde::{Deserialize, Serialize};

use crate::grammar::{parse_response, ParseOutcome};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::reward::RewardBreakdown;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("a group needs at least 2 responses, got {0}")]
    GroupTooSmall(usize),
    #[error("reward {index} is not finite")]
    NonFiniteReward { index: usize },
    #[error("log-probability lists must be non-empty")]
    EmptyLogProbs,
    #[error("log-probability lists differ in length: current {current}, old {old}, reference {reference}")]
    LengthMismatch { current: usize, old: usize, reference: usize },
    #[error("log-probability {value} at token {index} is not a finite value <= 0")]
    InvalidLogProb { index: usize, value: f64 },
    #[error("objective requires at least one group")]
    EmptyBatch,
    #[error("group {group}: {responses} responses but {advantages} advantages")]
    AdvantageMismatch { group: usize, responses: usize, advantages: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Per-token log-probabilities of one generated response under the current,
/// behaviour (old) and reference policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    #[serde(rename = "logp_current")]
    pub current: Vec<f64>,
    #[serde(rename = "logp_old")]
    pub old: Vec<f64>,
    #[serde(rename = "logp_ref")]
    pub reference: Vec<f64>,
}

impl TokenLogProbs {
    pub fn new(current: Vec<f64>, old: Vec<f64>, reference: Vec<f64>) -> Result<Self, GrpoError> {
        let logs = Self { current, old, reference };
        logs.validate()?;
        Ok(logs)
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        let (c, o, r) = (self.current.len(), self.old.len(), self.reference.len());
        if c != o || c != r {
            return Err(GrpoError::LengthMismatch { current: c, old: o, reference: r });
        }
        if c == 0 {
            return Err(GrpoError::EmptyLogProbs);
        }
        for list in [&self.current, &self.old, &self.reference] {
            if let Some((index, &value)) = list.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v <= 0.0)) {
                return Err(GrpoError::InvalidLogProb { index, value });
            }
        }
        Ok(())
    }
}

/// One sampled response with its reward and token log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub text: String,
    pub reward: RewardBreakdown,
    #[serde(flatten)]
    pub logprobs: TokenLogProbs,
}

impl CandidateResponse {
    pub fn parse(&self) -> ParseOutcome {
        parse_response(&self.text)
    }
}

/// `G` responses for one sample, with their group-normalized advantages.
///
/// Serialized without advantages; they are recomputed from `reward.total`
/// when a group is read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RolloutGroupRecord")]
pub struct RolloutGroup {
    pub sample_id: String,
    pub responses: Vec<CandidateResponse>,
    #[serde(skip_serializing)]
    pub advantages: Vec<f64>,
}

#[derive(Deserialize)]
struct RolloutGroupRecord {
    sample_id: String,
    responses: Vec<CandidateResponse>,
}

impl TryFrom<RolloutGroupRecord> for RolloutGroup {
    type Error = GrpoError;

    fn try_from(rec: RolloutGroupRecord) -> Result<Self, Self::Error> {
        RolloutGroup::new(rec.sample_id, rec.responses)
    }
}

impl RolloutGroup {
    /// Build a group and normalize its rewards.
    pub fn new(sample_id: impl Into<String>, responses: Vec<CandidateResponse>) -> Result<Self, GrpoError> {
        for r in &responses {
            r.logprobs.validate()?;
        }
        let rewards: Vec<f64> = responses.iter().map(|r| r.reward.total).collect();
        let advantages = normalize_advantages(&rewards)?;
        Ok(Self { sample_id: sample_id.into(), responses, advantages })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.responses.iter().map(|r| r.logprobs.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Per-response token mean, then mean over responses.
    SampleLevel,
    /// Sum over every token in the batch divided by the batch token count.
    #[default]
    TokenLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub beta: f64,
    pub aggregation: Aggregation,
    pub clip_epsilon: Option<f64>,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self { group_size: 8, beta: 0.04, aggregation: Aggregation::TokenLevel, clip_epsilon: None }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::Config(format!("group_size must be >= 2, got {}", self.group_size)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(GrpoError::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if let Some(eps) = self.clip_epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(GrpoError::Config(format!("clip_epsilon must be > 0, got {eps}")));
            }
        }
        Ok(())
    }
}

/// Standardize rewards within a group: `(r - mean) / std` with the population
/// standard deviation. A constant group yields all zeros.
pub fn normalize_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if let Some(index) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(GrpoError::NonFiniteReward { index });
    }
    let n = rewards.len() as f64;
    let mean = compensated_sum(rewards.iter().copied()) / n;
    let mut centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    // Second pass removes the rounding error left in `mean`.
    let residual = compensated_sum(centered.iter().copied()) / n;
    centered.iter_mut().for_each(|c| *c -= residual);
    if centered.iter().all(|&c| c == 0.0) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let std = (compensated_sum(centered.iter().map(|c| c * c)) / n).sqrt();
    Ok(centered.into_iter().map(|c| c / std).collect())
}

fn kl_token(current: f64, reference: f64) -> f64 {
    let d = reference - current;
    (d.exp_m1() - d).max(0.0)
}

/// Mean per-token KL estimate `exp(ref - cur) - (ref - cur) - 1`. Never negative.
pub fn kl_penalty(logs: &TokenLogProbs) -> Result<f64, GrpoError> {
    logs.validate()?;
    let total = compensated_sum(logs.current.iter().zip(&logs.reference).map(|(&c, &r)| kl_token(c, r)));
    Ok(total / logs.len() as f64)
}

/// Clamp an importance ratio into `[1 - eps, 1 + eps]`.
pub fn clipped_ratio(ratio: f64, clip_epsilon: f64) -> f64 {
    ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon)
}

/// Objective value plus the gradient coefficient of every token.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    /// `weights[group][response][token]` is d(objective)/d(current log-prob).
    pub weights: Vec<Vec<Vec<f64>>>,
    /// Mean per-token KL over the batch.
    pub mean_kl: f64,
    pub token_count: usize,
}

/// Evaluate the surrogate objective for a batch of groups.
pub fn grpo_objective(groups: &[RolloutGroup], cfg: &GrpoConfig) -> Result<Objective, GrpoError> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(GrpoError::EmptyBatch);
    }
    for (gi, g) in groups.iter().enumerate() {
        if g.advantages.len() != g.responses.len() {
            return Err(GrpoError::AdvantageMismatch {
                group: gi,
                responses: g.responses.len(),
                advantages: g.advantages.len(),
            });
        }
        if g.responses.is_empty() {
            return Err(GrpoError::GroupTooSmall(0));
        }
        for r in &g.responses {
            r.logprobs.validate()?;
        }
    }
    let token_count: usize = groups.iter().map(RolloutGroup::token_count).sum();
    let n_groups = groups.len() as f64;

    // Sums are divided only at the end of each level so that exact inputs
    // give exact objectives.
    let mut token_total = CompensatedSum::new();
    let mut group_means = CompensatedSum::new();
    let mut kl_sum = CompensatedSum::new();
    let mut weights = Vec::with_capacity(groups.len());
    for g in groups {
        let mut group_weights = Vec::with_capacity(g.len());
        let mut response_means = CompensatedSum::new();
        for (resp, &adv) in g.responses.iter().zip(&g.advantages) {
            let mut response_sum = CompensatedSum::new();
            let logs = &resp.logprobs;
            let scale = match cfg.aggregation {
                Aggregation::SampleLevel => 1.0 / (n_groups * g.len() as f64 * logs.len() as f64),
                Aggregation::TokenLevel => 1.0 / token_count as f64,
            };
            let mut token_weights = Vec::with_capacity(logs.len());
            for ((&cur, &old), &reference) in logs.current.iter().zip(&logs.old).zip(&logs.reference) {
                let ratio = (cur - old).exp();
                let unclipped = ratio * adv;
                let (surrogate, d_surrogate) = match cfg.clip_epsilon {
                    Some(eps) => {
                        let clipped = clipped_ratio(ratio, eps) * adv;
                        if unclipped <= clipped {
                            (unclipped, unclipped)
                        } else {
                            (clipped, 0.0)
                        }
                    }
                    None => (unclipped, unclipped),
                };
                let kl = kl_token(cur, reference);
                let d_kl = -(reference - cur).exp_m1();
                kl_sum.add(kl);
                let f = surrogate - cfg.beta * kl;
                response_sum.add(f);
                token_total.add(f);
                token_weights.push(scale * (d_surrogate - cfg.beta * d_kl));
            }
            response_means.add(response_sum.value() / logs.len() as f64);
            group_weights.push(token_weights);
        }
        group_means.add(response_means.value() / g.len() as f64);
        weights.push(group_weights);
    }
    let value = match cfg.aggregation {
        Aggregation::SampleLevel => group_means.value() / n_groups,
        Aggregation::TokenLevel => token_total.value() / token_count as f64,
    };
    Ok(Objective {
        value,
        weights,
        mean_kl: kl_sum.value() / token_count as f64,
        token_count,
    })
}
