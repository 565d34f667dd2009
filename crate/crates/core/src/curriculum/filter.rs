//! Difficulty-based subset selection.
//!
//! The pool is first put in a canonical order (difficulty, then sample id),
//! so the selected subset depends only on the pool's contents and the seed,
//! never on input order. Weighted selection without replacement uses
//! exponential keys: each item draws `u ~ U(0, 1]` and gets key
//! `ln(u) / w`; the `k` largest keys win. With equal weights this is a
//! uniform random `k`-subset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CurriculumError;
use crate::span::GroundingSample;

pub const DIFFICULTY_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStrategy {
    /// Weighted by a Gaussian bump over difficulty.
    #[default]
    Gaussian,
    /// Equal counts across ten equal-width difficulty bins.
    Uniform,
    /// Uniform without replacement.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub strategy: FilterStrategy,
    /// Center of the Gaussian weight.
    pub mean: f64,
    /// Standard deviation of the Gaussian weight.
    pub spread: f64,
    pub target_count: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { strategy: FilterStrategy::Gaussian, mean: 0.3, spread: 0.2, target_count: 2500 }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        if !(0.0..=1.0).contains(&self.mean) {
            return Err(CurriculumError::Config(format!("mean must lie in [0, 1], got {}", self.mean)));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(CurriculumError::Config(format!("spread must be > 0, got {}", self.spread)));
        }
        if self.target_count == 0 {
            return Err(CurriculumError::Config("target_count must be >= 1".into()));
        }
        Ok(())
    }

    /// Selection weight of a difficulty under the Gaussian strategy.
    pub fn gaussian_weight(&self, difficulty: f64) -> f64 {
        let z = (difficulty - self.mean) / self.spread;
        (-0.5 * z * z).exp()
    }
}

/// Ten-bin index of a difficulty in `[0, 1]`.
pub fn difficulty_bin(d: f64) -> usize {
    ((d * DIFFICULTY_BINS as f64).floor() as usize).min(DIFFICULTY_BINS - 1)
}

/// Histogram of difficulties over the ten bins.
pub fn difficulty_histogram<'a>(samples: impl IntoIterator<Item = &'a GroundingSample>) -> [usize; DIFFICULTY_BINS] {
    let mut h = [0; DIFFICULTY_BINS];
    for s in samples {
        if let Some(d) = s.difficulty {
            h[difficulty_bin(d)] += 1;
        }
    }
    h
}

fn exp_key(rng: &mut ChaCha8Rng, weight: f64) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    if weight > 0.0 {
        u.ln() / weight
    } else {
        f64::NEG_INFINITY
    }
}

/// Indices (into `order`) of the `k` largest keys, ties to the earlier item.
fn top_k(keys: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Select `min(target_count, pool size)` samples according to `spec`.
pub fn filter_pool(samples: &[GroundingSample], spec: &FilterSpec, seed: u64) -> Result<Vec<GroundingSample>, CurriculumError> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(CurriculumError::EmptyPool);
    }
    let mut difficulties = Vec::with_capacity(samples.len());
    for s in samples {
        match s.difficulty {
            Some(d) if (0.0..=1.0).contains(&d) => difficulties.push(d),
            Some(d) => return Err(CurriculumError::BadIou { id: s.sample_id().to_string(), value: d }),
            None => return Err(CurriculumError::MissingDifficulty(s.sample_id().to_string())),
        }
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        difficulties[a]
            .total_cmp(&difficulties[b])
            .then_with(|| samples[a].sample_id().cmp(samples[b].sample_id()))
    });
    let k = spec.target_count.min(samples.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let picked: Vec<usize> = match spec.strategy {
        FilterStrategy::Gaussian | FilterStrategy::Random => {
            let keys: Vec<f64> = order
                .iter()
                .map(|&i| {
                    let w = match spec.strategy {
                        FilterStrategy::Gaussian => spec.gaussian_weight(difficulties[i]),
                        _ => 1.0,
                    };
                    exp_key(&mut rng, w)
                })
                .collect();
            top_k(&keys, k).into_iter().map(|j| order[j]).collect()
        }
        FilterStrategy::Uniform => {
            let mut bins: Vec<Vec<usize>> = vec![Vec::new(); DIFFICULTY_BINS];
            for &i in &order {
                bins[difficulty_bin(difficulties[i])].push(i);
            }
            let caps: Vec<usize> = bins.iter().map(Vec::len).collect();
            let quotas = stratified_quotas(k, &caps);
            let mut picked = Vec::with_capacity(k);
            for (bin, quota) in bins.iter().zip(quotas) {
                let keys: Vec<f64> = bin.iter().map(|_| exp_key(&mut rng, 1.0)).collect();
                picked.extend(top_k(&keys, quota).into_iter().map(|j| bin[j]));
            }
            picked
        }
    };
    let mut picked = picked;
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| samples[i].clone()).collect())
}

/// Largest-remainder split of `total` over `weights`.
fn split(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let raw: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let short = total - out.iter().sum::<usize>();
    let mut idx: Vec<usize> = (0..raw.len()).filter(|&i| weights[i] > 0.0).collect();
    idx.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in idx.iter().cycle().take(short) {
        out[i] += 1;
    }
    out
}

/// Equal per-bin quotas; bins that cannot fill theirs hand the deficit to the
/// others in proportion to their spare capacity.
pub(crate) fn stratified_quotas(total: usize, caps: &[usize]) -> Vec<usize> {
    let total = total.min(caps.iter().sum());
    let mut quotas = split(total, &vec![1.0; caps.len()]);
    loop {
        let mut excess = 0;
        for (q, &c) in quotas.iter_mut().zip(caps) {
            if *q > c {
                excess += *q - c;
                *q = c;
            }
        }
        if excess == 0 {
            return quotas;
        }
        let spare: Vec<f64> = quotas.iter().zip(caps).map(|(q, c)| (c - q) as f64).collect();
        for (q, extra) in quotas.iter_mut().zip(split(excess, &spare)) {
            *q += extra;
        }
    }
}
