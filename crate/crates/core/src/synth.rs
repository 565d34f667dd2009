//! Seeded synthetic data for demos, tests and benchmarks.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curriculum::ColdStartSource;
use crate::eval::SemanticCategory;
use crate::grammar::CotSegment;
use crate::policy::anchor;
use crate::span::{GroundingSample, TimeSpan};

const SUBJECTS: [&str; 6] = ["a man", "a woman", "the child", "a dog", "the chef", "two people"];
const ACTIONS: [&str; 8] = [
    "opens the door",
    "picks up a cup",
    "sits on the sofa",
    "walks across the room",
    "turns on the light",
    "pours water",
    "waves at the camera",
    "closes the laptop",
];

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

fn query<R: Rng>(rng: &mut R) -> String {
    format!("{} {}", SUBJECTS.choose(rng).unwrap_or(&"someone"), ACTIONS.choose(rng).unwrap_or(&"moves"))
}

/// The fixed 16-sample training set used by the trainer demos.
pub fn training_set() -> Vec<GroundingSample> {
    grid_aligned_samples(16, 8, 2024)
}

/// `n` samples with durations in `[20, 180]` s whose ground truth sits on or
/// within a few percent of a `grid_size` grid.
pub fn grid_aligned_samples(n: usize, grid_size: usize, seed: u64) -> Vec<GroundingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let duration = round_to(rng.random_range(20.0..=180.0), 0.5);
            let i = rng.random_range(0..grid_size);
            let j = rng.random_range(i + 1..=grid_size);
            let jitter = 0.03 * duration;
            let mut s = anchor(i, grid_size, duration) + rng.random_range(-jitter..=jitter);
            let mut e = anchor(j, grid_size, duration) + rng.random_range(-jitter..=jitter);
            s = round_to(s.clamp(0.0, duration), 0.1);
            e = round_to(e.clamp(0.0, duration), 0.1).min(duration);
            if e <= s {
                e = (s + 0.1 * duration).min(duration);
                s = s.min(e - 0.1);
            }
            GroundingSample::new(format!("vid{k:03}"), duration, query(&mut rng), TimeSpan::raw(s, e))
                .with_id(format!("train-{k:02}"))
        })
        .collect()
}

/// `n` samples whose difficulty is uniform on `[0, 1]`.
pub fn uniform_difficulty_pool(n: usize, seed: u64) -> Vec<GroundingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let mut s = GroundingSample::new(format!("pool{k:06}"), 60.0, "a person moves", TimeSpan::raw(10.0, 20.0));
            s.difficulty = Some(rng.random::<f64>());
            s
        })
        .collect()
}

/// Candidate pool for benchmark curation: random durations in `(0, 180]`,
/// spans anywhere in the video, sources drawn by `source_weights`, every
/// category equally likely.
pub fn benchmark_pool(n: usize, source_weights: &[(&str, f64)], seed: u64) -> Vec<GroundingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = source_weights.iter().map(|(_, w)| w).sum();
    (0..n)
        .map(|k| {
            let duration = round_to(rng.random_range(5.0..=180.0), 0.5);
            let len = rng.random_range(0.05..=0.5) * duration;
            let start = rng.random_range(0.0..=duration - len);
            let gt = TimeSpan::raw(start, start + len);
            let mut pick = rng.random::<f64>() * total;
            let mut source = source_weights.last().map_or("synthetic", |(s, _)| *s);
            for (s, w) in source_weights {
                if pick < *w {
                    source = s;
                    break;
                }
                pick -= w;
            }
            let category = *SemanticCategory::ALL.choose(&mut rng).unwrap_or(&SemanticCategory::HAS);
            GroundingSample::new(format!("bench{k:05}"), duration, query(&mut rng), gt)
                .with_source(source)
                .with_category(category)
        })
        .collect()
}

/// Captioned samples for the cold-start builder. The ground truth is always
/// one of the captioned segments.
pub fn cold_start_sources(n: usize, seed: u64) -> Vec<ColdStartSource> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let duration = round_to(rng.random_range(10.0..=120.0), 0.5);
            let pieces = rng.random_range(2..=4usize);
            let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| round_to(rng.random_range(0.1..0.9) * duration, 0.1)).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut bounds = vec![0.0];
            bounds.extend(cuts);
            bounds.push(duration);
            let segments: Vec<CotSegment> = bounds
                .windows(2)
                .filter(|w| w[1] > w[0])
                .map(|w| CotSegment::new(TimeSpan::raw(w[0], w[1]), query(&mut rng)))
                .collect();
            let target = segments.choose(&mut rng).cloned().unwrap_or_else(|| CotSegment::new(TimeSpan::raw(0.0, duration), "a scene"));
            let sample = GroundingSample::new(format!("cs{k:04}"), duration, target.caption.clone(), target.span);
            ColdStartSource { sample, segments }
        })
        .collect()
}
