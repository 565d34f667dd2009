use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{anchor, Channel, GridPolicy, PolicyError, Template};
use crate::grammar::parse_response;
use crate::grpo::{CandidateResponse, RolloutGroup, TokenLogProbs};
use crate::numeric::{log_softmax, softmax};
use crate::reward::{total_reward, RewardBreakdown};
use crate::span::{GroundingSample, TimeSpan};

/// One categorical draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub channel: Channel,
    pub index: usize,
}

/// A scored group plus the draws behind every response, in token order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRollout {
    pub group: RolloutGroup,
    pub tokens: Vec<Vec<Token>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random stream for one sample at one step.
///
/// Streams depend only on `(seed, sample_id, step)`, so rollouts can run in
/// any order or in parallel with identical results.
pub fn stream_rng(seed: u64, sample_id: &str, step: u64) -> ChaCha8Rng {
    let id_hash = sample_id
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325_u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3));
    let key = splitmix64(splitmix64(seed ^ splitmix64(id_hash)) ^ step);
    ChaCha8Rng::seed_from_u64(key)
}

fn draw<R: Rng>(logits: &[f64], rng: &mut R) -> usize {
    // Softmax of finite logits always has a positive entry.
    WeightedIndex::new(softmax(logits)).map(|d| d.sample(rng)).unwrap_or(0)
}

fn grid_span(policy: &GridPolicy, pair_index: usize, duration: f64) -> TimeSpan {
    let (i, j) = policy.pairs()[pair_index];
    TimeSpan::raw(anchor(i, policy.grid_size, duration), anchor(j, policy.grid_size, duration))
}

/// Sample `group_size` responses for one sample and score them.
///
/// Token order within a response: template, then (for templates with a think
/// block) the think length and that many words, then the span. The behaviour
/// policy equals the current one, so `old == current` for every token; the
/// reference log-probabilities come from `reference`.
pub fn rollout<R: Rng>(
    policy: &GridPolicy,
    reference: &GridPolicy,
    sample: &GroundingSample,
    group_size: usize,
    rng: &mut R,
) -> Result<SimRollout, PolicyError> {
    let id = sample.sample_id();
    sample.validate().map_err(|e| PolicyError::InvalidSample(id.to_string(), e))?;
    if policy.grid_size != reference.grid_size || policy.flat_params().len() != reference.flat_params().len() {
        return Err(PolicyError::Shape("reference policy has a different shape".into()));
    }
    let channels = [Channel::Template, Channel::ThinkLength, Channel::ThinkWord, Channel::Span];
    let mut cur_lp = Vec::with_capacity(4);
    let mut ref_lp = Vec::with_capacity(4);
    for ch in &channels {
        cur_lp.push(log_softmax(policy.logits(ch, id)?));
        ref_lp.push(log_softmax(reference.logits(ch, id)?));
    }
    let slot = |ch: Channel| channels.iter().position(|c| *c == ch).unwrap_or(0);

    let mut responses = Vec::with_capacity(group_size);
    let mut all_tokens = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let mut tokens = Vec::new();
        let template_index = draw(&policy.template_logits, rng);
        tokens.push(Token { channel: Channel::Template, index: template_index });
        let template = Template::ALL[template_index];
        let mut words = Vec::new();
        if template.has_think() {
            let len = draw(&policy.think_length_logits, rng);
            tokens.push(Token { channel: Channel::ThinkLength, index: len });
            for _ in 0..len {
                let w = draw(&policy.think_vocab_logits, rng);
                tokens.push(Token { channel: Channel::ThinkWord, index: w });
                words.push(policy.vocab[w].as_str());
            }
        }
        let pair = draw(policy.span_table(id)?, rng);
        tokens.push(Token { channel: Channel::Span, index: pair });

        let text = template.render(&words, &grid_span(policy, pair, sample.duration));
        let reward = total_reward(&parse_response(&text), &sample.gt, sample.duration);
        let current: Vec<f64> = tokens.iter().map(|t| cur_lp[slot(t.channel)][t.index]).collect();
        let reference: Vec<f64> = tokens.iter().map(|t| ref_lp[slot(t.channel)][t.index]).collect();
        let logprobs = TokenLogProbs::new(current.clone(), current, reference)?;
        responses.push(CandidateResponse { text, reward, logprobs });
        all_tokens.push(tokens);
    }
    Ok(SimRollout { group: RolloutGroup::new(id, responses)?, tokens: all_tokens })
}

/// Reward of every (template, think length, grid span) combination for one
/// sample.
///
/// Rewards never depend on which think words were drawn, only on the layout
/// and the span, so this table makes expected rewards exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    /// `rewards[template][think_len][pair]`
    rewards: Vec<Vec<Vec<RewardBreakdown>>>,
}

impl RewardTable {
    pub fn new(policy: &GridPolicy, sample: &GroundingSample) -> Result<Self, PolicyError> {
        sample.validate().map_err(|e| PolicyError::InvalidSample(sample.sample_id().to_string(), e))?;
        let n_pairs = policy.pairs().len();
        let word = policy.vocab[0].as_str();
        let rewards = Template::ALL
            .iter()
            .map(|t| {
                (0..=policy.max_think_len())
                    .map(|len| {
                        let words = vec![word; len];
                        (0..n_pairs)
                            .map(|p| {
                                let text = t.render(&words, &grid_span(policy, p, sample.duration));
                                total_reward(&parse_response(&text), &sample.gt, sample.duration)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { rewards })
    }

    /// Exact expectation of each reward component under `policy`.
    pub fn expected(&self, policy: &GridPolicy, sample_id: &str) -> Result<ExpectedReward, PolicyError> {
        let p_template = policy.template_probs();
        let p_len = policy.think_length_probs();
        let p_span = policy.span_probs(sample_id)?;
        if p_len.len() != self.rewards[0].len() || p_span.len() != self.rewards[0][0].len() {
            return Err(PolicyError::Shape("reward table does not match the policy".into()));
        }
        let mut out = ExpectedReward::default();
        for (t, &pt) in Template::ALL.iter().zip(&p_template) {
            let rows = &self.rewards[*t as usize];
            let lens: Vec<(usize, f64)> =
                if t.has_think() { p_len.iter().copied().enumerate().collect() } else { vec![(0, 1.0)] };
            for (len, pl) in lens {
                for (r, &ps) in rows[len].iter().zip(&p_span) {
                    let w = pt * pl * ps;
                    out.total += w * r.total;
                    out.tiou += w * r.tiou;
                    out.iou += w * r.iou;
                    out.format_rate += w * f64::from(r.format);
                }
            }
        }
        Ok(out)
    }
}

/// Expected reward components under a policy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpectedReward {
    pub total: f64,
    pub tiou: f64,
    pub iou: f64,
    pub format_rate: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::normalize_advantages;

    fn sample() -> GroundingSample {
        GroundingSample::new("v", 30.0, "someone opens a door", TimeSpan::raw(7.5, 15.0))
    }

    #[test]
    fn uniform_span_probability_is_one_over_pairs() {
        let p = GridPolicy::uniform(4, 2, &["a"], ["v"]).unwrap();
        for prob in p.span_probs("v").unwrap() {
            assert!((prob - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn rollout_is_reproducible() {
        let p = GridPolicy::uniform(8, 6, &super::super::DEFAULT_VOCAB, ["v"]).unwrap();
        let a = rollout(&p, &p, &sample(), 8, &mut stream_rng(3, "v", 0)).unwrap();
        let b = rollout(&p, &p, &sample(), 8, &mut stream_rng(3, "v", 0)).unwrap();
        assert_eq!(a, b);
        let c = rollout(&p, &p, &sample(), 8, &mut stream_rng(3, "v", 1)).unwrap();
        assert_ne!(a.group, c.group);
        for (resp, toks) in a.group.responses.iter().zip(&a.tokens) {
            assert_eq!(resp.logprobs.len(), toks.len());
            assert_eq!(resp.logprobs.current, resp.logprobs.old);
        }
    }

    #[test]
    fn deterministic_policy_gives_zero_advantages() {
        let mut p = GridPolicy::uniform(4, 2, &["a"], ["v"]).unwrap();
        p.template_logits[0] = 1e3;
        p.think_length_logits[1] = 1e3;
        p.span_logits.get_mut("v").unwrap()[3] = 1e3;
        let r = rollout(&p, &p, &sample(), 6, &mut stream_rng(0, "v", 0)).unwrap();
        assert!(r.group.responses.iter().all(|x| x.text == r.group.responses[0].text));
        assert_eq!(r.group.advantages, vec![0.0; 6]);
        let totals: Vec<f64> = r.group.responses.iter().map(|x| x.reward.total).collect();
        assert_eq!(normalize_advantages(&totals).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn empirical_span_frequencies_match_uniform() {
        let p = GridPolicy::uniform(4, 0, &["a"], ["v"]).unwrap();
        let mut counts = [0usize; 10];
        let mut rng = stream_rng(11, "v", 0);
        for _ in 0..2000 {
            let r = rollout(&p, &p, &sample(), 10, &mut rng).unwrap();
            for toks in &r.tokens {
                counts[toks.last().unwrap().index] += 1;
            }
        }
        for c in counts {
            // 20000 draws, p = 0.1: std ~ 42.
            assert!((c as f64 - 2000.0).abs() < 250.0, "{counts:?}");
        }
    }

    #[test]
    fn expected_reward_of_uniform_policy() {
        let p = GridPolicy::uniform(4, 1, &["a"], ["v"]).unwrap();
        let s = sample();
        let table = RewardTable::new(&p, &s).unwrap();
        let e = table.expected(&p, "v").unwrap();
        // Brute force over the ten grid spans.
        let mut tiou_sum = 0.0;
        for (i, j) in p.pairs() {
            let span = TimeSpan::raw(7.5 * i as f64, 7.5 * j as f64);
            tiou_sum += crate::reward::tiou(&span, &s.gt, 30.0).unwrap();
        }
        let mean_tiou = tiou_sum / 10.0;
        // Three of four templates expose the span; one of four is well-formed.
        assert!((e.tiou - 0.75 * mean_tiou).abs() < 1e-12);
        assert!((e.format_rate - 0.25).abs() < 1e-12);
        assert!((e.total - (0.25 + 0.75 * mean_tiou)).abs() < 1e-12);
    }
}
