//! A toy policy that closes the reinforcement-learning loop.
//!
//! [`GridPolicy`] is a set of independent categorical distributions:
//!
//! * a template channel choosing how the response is laid out
//!   (well-formed, missing think block, trailing text, bare answer),
//! * a think-length channel over `0..=max_think_len` and a word channel over a
//!   small vocabulary, used only by templates that carry a think block,
//! * one span table per training sample over the grid spans `(i, j)`,
//!   `0 <= i < j <= K`, with anchors at `k * duration / K`.
//!
//! Each categorical draw is one token. Because every token's log-probability
//! is a log-softmax entry, the exact parameter gradient of any objective that
//! is linear in those log-probabilities is `sum weight * (onehot - softmax)`.

mod gradient;
mod rollout;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumError;
use crate::grpo::GrpoError;
use crate::numeric::{log_softmax, softmax};
use crate::span::{GroundingSample, SpanError, TimeSpan};

pub use gradient::{analytic_gradient, current_logprobs, regroup_with_policy, PolicyGradient};
pub use rollout::{rollout, stream_rng, ExpectedReward, RewardTable, SimRollout, Token};
pub use train::{train, train_from, StepRecord, TrainerConfig, TrainingReport, TrainingSummary};

pub const DEFAULT_GRID_SIZE: usize = 8;
pub const DEFAULT_MAX_THINK_LEN: usize = 6;

/// Words the think channel draws from unless configured otherwise.
pub const DEFAULT_VOCAB: [&str; 8] = ["person", "object", "moves", "enters", "leaves", "scene", "then", "again"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid policy: {0}")]
    Config(String),
    #[error("no span table for sample {0}")]
    UnknownSample(String),
    #[error("duplicate sample id {0}")]
    DuplicateSample(String),
    #[error("no training samples")]
    EmptySamples,
    #[error("sample {0}: {1}")]
    InvalidSample(String, SpanError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
}

/// Response layouts the template channel chooses between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// `<think>words</think><answer>a to b</answer>`
    WellFormed,
    /// `<answer>a to b</answer>`
    MissingThink,
    /// A well-formed response followed by stray text.
    TrailingText,
    /// `a to b` with no tags at all.
    BareAnswer,
}

impl Template {
    pub const ALL: [Template; 4] = [Self::WellFormed, Self::MissingThink, Self::TrailingText, Self::BareAnswer];

    pub fn has_think(self) -> bool {
        matches!(self, Self::WellFormed | Self::TrailingText)
    }

    /// Render the response text.
    pub fn render(self, words: &[&str], span: &TimeSpan) -> String {
        let answer = format!("{} to {}", span.start, span.end);
        match self {
            Self::WellFormed => format!("<think>{}</think><answer>{answer}</answer>", words.join(" ")),
            Self::MissingThink => format!("<answer>{answer}</answer>"),
            Self::TrailingText => format!("<think>{}</think><answer>{answer}</answer> done", words.join(" ")),
            Self::BareAnswer => answer,
        }
    }
}

/// All grid spans `(i, j)` with `0 <= i < j <= grid_size`, in lexicographic order.
pub fn grid_pairs(grid_size: usize) -> Vec<(usize, usize)> {
    (0..=grid_size).flat_map(|i| (i + 1..=grid_size).map(move |j| (i, j))).collect()
}

/// Time of anchor `k` on a grid of `grid_size` cells over `duration` seconds.
pub fn anchor(k: usize, grid_size: usize, duration: f64) -> f64 {
    if k >= grid_size {
        duration
    } else {
        duration * k as f64 / grid_size as f64
    }
}

/// Factored categorical policy. Field order is the checkpoint key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    pub grid_size: usize,
    pub vocab: Vec<String>,
    /// One logit per [`Template`], in `Template::ALL` order.
    pub template_logits: Vec<f64>,
    /// Logits over think lengths `0..=max_think_len`.
    pub think_length_logits: Vec<f64>,
    /// Logits over `vocab`.
    pub think_vocab_logits: Vec<f64>,
    /// Per-sample logits over [`grid_pairs`].
    pub span_logits: BTreeMap<String, Vec<f64>>,
}

impl GridPolicy {
    /// Uniform policy with one span table per sample id.
    pub fn uniform<I, S>(grid_size: usize, max_think_len: usize, vocab: &[S], sample_ids: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator,
        I::Item: Into<String>,
        S: AsRef<str>,
    {
        let n_pairs = grid_pairs(grid_size).len();
        let mut span_logits = BTreeMap::new();
        for id in sample_ids {
            let id = id.into();
            if span_logits.insert(id.clone(), vec![0.0; n_pairs]).is_some() {
                return Err(PolicyError::DuplicateSample(id));
            }
        }
        let policy = Self {
            grid_size,
            vocab: vocab.iter().map(|w| w.as_ref().to_string()).collect(),
            template_logits: vec![0.0; Template::ALL.len()],
            think_length_logits: vec![0.0; max_think_len + 1],
            think_vocab_logits: vec![0.0; vocab.len()],
            span_logits,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Tilt the think-length channel towards short reasoning: logit `-strength * len`.
    pub fn with_short_think_bias(mut self, strength: f64) -> Self {
        for (len, l) in self.think_length_logits.iter_mut().enumerate() {
            *l = -strength * len as f64;
        }
        self
    }

    pub fn max_think_len(&self) -> usize {
        self.think_length_logits.len().saturating_sub(1)
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        grid_pairs(self.grid_size)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.grid_size < 2 {
            return Err(PolicyError::Config(format!("grid_size must be >= 2, got {}", self.grid_size)));
        }
        if self.vocab.is_empty() {
            return Err(PolicyError::Config("vocabulary must not be empty".into()));
        }
        if let Some(w) = self.vocab.iter().find(|w| w.is_empty() || w.contains(['<', '>']) || w.contains(char::is_whitespace)) {
            return Err(PolicyError::Config(format!("vocabulary word {w:?} must be non-empty, tag-free and without whitespace")));
        }
        let n_pairs = grid_pairs(self.grid_size).len();
        let check = |name: &str, logits: &[f64], len: usize| {
            if logits.len() != len {
                return Err(PolicyError::Shape(format!("{name}: expected {len} logits, got {}", logits.len())));
            }
            if logits.iter().any(|l| !l.is_finite()) {
                return Err(PolicyError::Config(format!("{name}: logits must be finite")));
            }
            Ok(())
        };
        check("template_logits", &self.template_logits, Template::ALL.len())?;
        if self.think_length_logits.is_empty() {
            return Err(PolicyError::Shape("think_length_logits must not be empty".into()));
        }
        check("think_length_logits", &self.think_length_logits, self.think_length_logits.len())?;
        check("think_vocab_logits", &self.think_vocab_logits, self.vocab.len())?;
        for (id, logits) in &self.span_logits {
            check(&format!("span_logits[{id}]"), logits, n_pairs)?;
        }
        Ok(())
    }

    pub fn span_table(&self, sample_id: &str) -> Result<&[f64], PolicyError> {
        self.span_logits
            .get(sample_id)
            .map(Vec::as_slice)
            .ok_or_else(|| PolicyError::UnknownSample(sample_id.to_string()))
    }

    /// Logits of one channel.
    pub fn logits(&self, channel: &Channel, sample_id: &str) -> Result<&[f64], PolicyError> {
        Ok(match channel {
            Channel::Template => &self.template_logits,
            Channel::ThinkLength => &self.think_length_logits,
            Channel::ThinkWord => &self.think_vocab_logits,
            Channel::Span => self.span_table(sample_id)?,
        })
    }

    pub fn template_probs(&self) -> Vec<f64> {
        softmax(&self.template_logits)
    }

    pub fn think_length_probs(&self) -> Vec<f64> {
        softmax(&self.think_length_logits)
    }

    pub fn span_probs(&self, sample_id: &str) -> Result<Vec<f64>, PolicyError> {
        Ok(softmax(self.span_table(sample_id)?))
    }

    /// Log-probability of choosing `index` on `channel`.
    pub fn logprob(&self, channel: &Channel, sample_id: &str, index: usize) -> Result<f64, PolicyError> {
        let logits = self.logits(channel, sample_id)?;
        log_softmax(logits)
            .get(index)
            .copied()
            .ok_or_else(|| PolicyError::Shape(format!("{channel:?} index {index} out of range")))
    }

    /// Most likely grid span for a sample.
    pub fn greedy_span(&self, sample: &GroundingSample) -> Result<TimeSpan, PolicyError> {
        let logits = self.span_table(sample.sample_id())?;
        let best = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (i, j) = self.pairs()[best];
        Ok(TimeSpan::raw(anchor(i, self.grid_size, sample.duration), anchor(j, self.grid_size, sample.duration)))
    }

    /// All logits in checkpoint order, flattened.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(&self.template_logits);
        out.extend(&self.think_length_logits);
        out.extend(&self.think_vocab_logits);
        for logits in self.span_logits.values() {
            out.extend(logits);
        }
        out
    }

    /// Inverse of [`GridPolicy::flat_params`].
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), PolicyError> {
        let expected = self.flat_params().len();
        if params.len() != expected {
            return Err(PolicyError::Shape(format!("expected {expected} parameters, got {}", params.len())));
        }
        let mut it = params.iter().copied();
        let mut fill = |dst: &mut Vec<f64>| dst.iter_mut().for_each(|d| *d = it.next().unwrap_or(*d));
        fill(&mut self.template_logits);
        fill(&mut self.think_length_logits);
        fill(&mut self.think_vocab_logits);
        for logits in self.span_logits.values_mut() {
            fill(logits);
        }
        Ok(())
    }

    /// Gradient-ascent step `params += lr * grad`.
    pub fn ascend(&mut self, grad: &PolicyGradient, learning_rate: f64) -> Result<(), PolicyError> {
        let params = self.flat_params();
        let g = grad.flatten(self)?;
        let next: Vec<f64> = params.iter().zip(&g).map(|(p, g)| p + learning_rate * g).collect();
        self.set_flat_params(&next)
    }
}

/// Which categorical a token was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Template,
    ThinkLength,
    ThinkWord,
    Span,
}
