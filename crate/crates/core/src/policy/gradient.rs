use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Channel, GridPolicy, PolicyError, SimRollout};
use crate::grpo::{RolloutGroup, TokenLogProbs};
use crate::numeric::{log_softmax, softmax};

/// Gradient with the same shape as a [`GridPolicy`]'s logits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyGradient {
    pub template: Vec<f64>,
    pub think_length: Vec<f64>,
    pub think_vocab: Vec<f64>,
    pub span: BTreeMap<String, Vec<f64>>,
}

impl PolicyGradient {
    pub fn zeros_like(policy: &GridPolicy) -> Self {
        Self {
            template: vec![0.0; policy.template_logits.len()],
            think_length: vec![0.0; policy.think_length_logits.len()],
            think_vocab: vec![0.0; policy.think_vocab_logits.len()],
            span: policy.span_logits.iter().map(|(k, v)| (k.clone(), vec![0.0; v.len()])).collect(),
        }
    }

    /// Flatten in [`GridPolicy::flat_params`] order. Span tables missing from
    /// the gradient count as zero.
    pub fn flatten(&self, policy: &GridPolicy) -> Result<Vec<f64>, PolicyError> {
        let shape_err = || PolicyError::Shape("gradient does not match the policy".into());
        if self.template.len() != policy.template_logits.len()
            || self.think_length.len() != policy.think_length_logits.len()
            || self.think_vocab.len() != policy.think_vocab_logits.len()
        {
            return Err(shape_err());
        }
        let mut out = Vec::with_capacity(policy.flat_params().len());
        out.extend(&self.template);
        out.extend(&self.think_length);
        out.extend(&self.think_vocab);
        for (id, logits) in &policy.span_logits {
            match self.span.get(id) {
                Some(g) if g.len() == logits.len() => out.extend(g),
                Some(_) => return Err(shape_err()),
                None => out.extend(std::iter::repeat_n(0.0, logits.len())),
            }
        }
        if let Some(extra) = self.span.keys().find(|k| !policy.span_logits.contains_key(*k)) {
            return Err(PolicyError::UnknownSample(extra.clone()));
        }
        Ok(out)
    }

    pub fn norm(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        (sq(&self.template) + sq(&self.think_length) + sq(&self.think_vocab) + self.span.values().map(|v| sq(v)).sum::<f64>())
            .sqrt()
    }

    fn slot(&mut self, channel: Channel, sample_id: &str) -> &mut Vec<f64> {
        match channel {
            Channel::Template => &mut self.template,
            Channel::ThinkLength => &mut self.think_length,
            Channel::ThinkWord => &mut self.think_vocab,
            Channel::Span => self.span.entry(sample_id.to_string()).or_default(),
        }
    }
}

/// Exact gradient of `sum weight * logp(token)` with respect to every logit.
///
/// `weights[g][r][t]` must line up with `rollouts[g].tokens[r][t]`; the
/// weights returned by [`crate::grpo::grpo_objective`] on the same groups
/// make this the gradient of the objective.
pub fn analytic_gradient(
    policy: &GridPolicy,
    rollouts: &[SimRollout],
    weights: &[Vec<Vec<f64>>],
) -> Result<PolicyGradient, PolicyError> {
    if rollouts.len() != weights.len() {
        return Err(PolicyError::Shape(format!("{} rollouts but {} weight groups", rollouts.len(), weights.len())));
    }
    let mut grad = PolicyGradient::zeros_like(policy);
    for (g, (ro, group_w)) in rollouts.iter().zip(weights).enumerate() {
        let id = ro.group.sample_id.as_str();
        if ro.tokens.len() != group_w.len() {
            return Err(PolicyError::Shape(format!("group {g}: {} responses but {} weight rows", ro.tokens.len(), group_w.len())));
        }
        for (r, (tokens, w)) in ro.tokens.iter().zip(group_w).enumerate() {
            if tokens.len() != w.len() {
                return Err(PolicyError::Shape(format!("group {g} response {r}: {} tokens but {} weights", tokens.len(), w.len())));
            }
            for (tok, &wt) in tokens.iter().zip(w) {
                if wt == 0.0 {
                    continue;
                }
                let probs = softmax(policy.logits(&tok.channel, id)?);
                if tok.index >= probs.len() {
                    return Err(PolicyError::Shape(format!("{:?} index {} out of range", tok.channel, tok.index)));
                }
                let slot = grad.slot(tok.channel, id);
                for (k, (gk, pk)) in slot.iter_mut().zip(&probs).enumerate() {
                    let onehot = if k == tok.index { 1.0 } else { 0.0 };
                    *gk += wt * (onehot - pk);
                }
            }
        }
    }
    Ok(grad)
}

/// Current-policy log-probabilities of a recorded token sequence.
pub fn current_logprobs(policy: &GridPolicy, sample_id: &str, tokens: &[super::Token]) -> Result<Vec<f64>, PolicyError> {
    let mut cache: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    tokens
        .iter()
        .map(|t| {
            let key = t.channel as u8;
            let logp = match cache.entry(key) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => e.insert(log_softmax(policy.logits(&t.channel, sample_id)?)),
            };
            logp
                .get(t.index)
                .copied()
                .ok_or_else(|| PolicyError::Shape(format!("{:?} index {} out of range", t.channel, t.index)))
        })
        .collect()
}

/// Re-evaluate recorded rollouts under `policy`, keeping the sampled tokens,
/// rewards, behaviour and reference log-probabilities fixed.
pub fn regroup_with_policy(policy: &GridPolicy, rollouts: &[SimRollout]) -> Result<Vec<RolloutGroup>, PolicyError> {
    rollouts
        .iter()
        .map(|ro| {
            let mut group = ro.group.clone();
            for (resp, tokens) in group.responses.iter_mut().zip(&ro.tokens) {
                let current = current_logprobs(policy, &group.sample_id, tokens)?;
                resp.logprobs = TokenLogProbs {
                    current,
                    old: std::mem::take(&mut resp.logprobs.old),
                    reference: std::mem::take(&mut resp.logprobs.reference),
                };
            }
            Ok(group)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::{grpo_objective, GrpoConfig};
    use crate::policy::{rollout, stream_rng, Token};
    use crate::span::{GroundingSample, TimeSpan};

    #[test]
    fn zero_advantage_and_no_penalty_gives_zero_gradient() {
        let p = GridPolicy::uniform(4, 2, &["a"], ["v"]).unwrap();
        let mut det = p.clone();
        det.template_logits[0] = 1e3;
        det.think_length_logits[0] = 1e3;
        det.span_logits.get_mut("v").unwrap()[0] = 1e3;
        let s = GroundingSample::new("v", 30.0, "q", TimeSpan::raw(0.0, 7.5));
        let ro = rollout(&det, &det, &s, 4, &mut stream_rng(0, "v", 0)).unwrap();
        let cfg = GrpoConfig { beta: 0.0, ..Default::default() };
        let obj = grpo_objective(std::slice::from_ref(&ro.group), &cfg).unwrap();
        let g = analytic_gradient(&det, &[ro], &obj.weights).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn single_token_score_identity() {
        let mut p = GridPolicy::uniform(2, 0, &["a"], ["v"]).unwrap();
        p.span_logits.get_mut("v").unwrap().copy_from_slice(&[0.5, -1.0, 2.0]);
        let s = GroundingSample::new("v", 10.0, "q", TimeSpan::raw(0.0, 5.0));
        let mut ro = rollout(&p, &p, &s, 2, &mut stream_rng(0, "v", 0)).unwrap();
        ro.tokens = vec![vec![Token { channel: Channel::Span, index: 2 }]];
        let g = analytic_gradient(&p, std::slice::from_ref(&ro), &[vec![vec![1.0]]]).unwrap();
        let probs = softmax(&[0.5, -1.0, 2.0]);
        let gs = &g.span["v"];
        assert!((gs[2] - (1.0 - probs[2])).abs() < 1e-15);
        assert!((gs[0] + probs[0]).abs() < 1e-15);
        assert!((gs[1] + probs[1]).abs() < 1e-15);
        assert_eq!(g.template, vec![0.0; 4]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = GridPolicy::uniform(2, 0, &["a"], ["v"]).unwrap();
        let s = GroundingSample::new("v", 10.0, "q", TimeSpan::raw(0.0, 5.0));
        let ro = rollout(&p, &p, &s, 2, &mut stream_rng(0, "v", 0)).unwrap();
        assert!(matches!(analytic_gradient(&p, std::slice::from_ref(&ro), &[]), Err(PolicyError::Shape(_))));
        assert!(matches!(analytic_gradient(&p, &[ro], &[vec![vec![1.0]]]), Err(PolicyError::Shape(_))));
    }

    #[test]
    fn regrouping_under_same_policy_is_identity() {
        let p = GridPolicy::uniform(8, 3, &["a", "b"], ["v"]).unwrap();
        let s = GroundingSample::new("v", 40.0, "q", TimeSpan::raw(3.0, 9.0));
        let ro = rollout(&p, &p, &s, 5, &mut stream_rng(1, "v", 4)).unwrap();
        assert_eq!(regroup_with_policy(&p, std::slice::from_ref(&ro)).unwrap(), vec![ro.group]);
    }
}
