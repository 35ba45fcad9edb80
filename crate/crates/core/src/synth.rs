//! Synthetic variability profiles for experiments and tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::variability::{normalize_profile, VariabilityProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// Three classes sharing one per-GPU slowness; class A has a heavy
    /// right tail, B half of A's deviation, C almost flat.
    HeavyTail,
    /// One class with tight groups at 0.89, 0.94 and 1.06 and a single GPU
    /// at 2.55.
    ThreeLevels,
    /// One class of 128 GPUs in four groups, most GPUs in the two fastest.
    FourLevels,
    /// One class evenly spread over +-1% around 1.0.
    Uniform,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heavy-tail" => Ok(ProfileKind::HeavyTail),
            "three-levels" => Ok(ProfileKind::ThreeLevels),
            "four-levels" => Ok(ProfileKind::FourLevels),
            "uniform" => Ok(ProfileKind::Uniform),
            other => Err(Error::invalid(format!("unknown profile kind '{other}'"))),
        }
    }
}

/// Builds a profile of the given kind. `num_gpus` is ignored by the fixed
/// size kinds except `ThreeLevels`, where it sets the total count.
pub fn synthesize_profile(kind: ProfileKind, num_gpus: usize, seed: u64) -> Result<VariabilityProfile<f64>> {
    if num_gpus == 0 {
        return Err(Error::invalid("num_gpus must be positive"));
    }
    match kind {
        ProfileKind::HeavyTail => heavy_tail_profile(num_gpus, seed),
        ProfileKind::ThreeLevels => three_level_profile((num_gpus.saturating_sub(1) / 3).max(1), seed),
        ProfileKind::FourLevels => four_level_profile(seed),
        ProfileKind::Uniform => uniform_profile(num_gpus, 0.01, seed),
    }
}

/// Three correlated classes over `num_gpus` GPUs, normalized to the median.
///
/// Per-GPU slowness `s` (A's deviation from nominal) is drawn as a narrow
/// body of about 3% spread, about 10% of GPUs at 1.15-1.6x, and about 4% at
/// 2-3.5x. Class B sees `1 + s/2`, class C `1 + s/20`.
pub fn heavy_tail_profile(num_gpus: usize, seed: u64) -> Result<VariabilityProfile<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = Normal::new(0.0_f64, 0.03).expect("valid normal");
    let slowness: Vec<f64> = (0..num_gpus)
        .map(|_| {
            let u: f64 = rng.random();
            if u < 0.04 {
                rng.random_range(1.0..2.5)
            } else if u < 0.14 {
                rng.random_range(0.15..0.6)
            } else {
                body.sample(&mut rng).abs()
            }
        })
        .collect();
    let raw: Vec<Vec<f64>> = [1.0, 0.5, 0.05]
        .iter()
        .map(|&w| slowness.iter().map(|s| 1.0 + w * s).collect())
        .collect();
    normalize_profile(&raw)
}

/// `per_level` GPUs at each of 0.89, 0.94 and 1.06 with +-0.002 jitter,
/// followed by one GPU at 2.55. Not renormalized.
pub fn three_level_profile(per_level: usize, seed: u64) -> Result<VariabilityProfile<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(3 * per_level + 1);
    for level in [0.89, 0.94, 1.06] {
        v.extend((0..per_level).map(|_| level + rng.random_range(-0.002..=0.002)));
    }
    v.push(2.55);
    VariabilityProfile::new(vec![v])
}

/// 128 GPUs: 58 near 0.97, 44 near 1.00, 18 near 1.04, 8 near 1.10 (all
/// +-0.004), normalized to the median.
pub fn four_level_profile(seed: u64) -> Result<VariabilityProfile<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(128);
    for (count, level) in [(58, 0.97), (44, 1.0), (18, 1.04), (8, 1.10)] {
        v.extend((0..count).map(|_| level + rng.random_range(-0.004..=0.004)));
    }
    normalize_profile(&[v])
}

/// One class of `num_gpus` values evenly spread over `1 +- width`, in a
/// seeded random GPU order.
pub fn uniform_profile(num_gpus: usize, width: f64, seed: u64) -> Result<VariabilityProfile<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = if num_gpus > 1 { 2.0 * width / (num_gpus - 1) as f64 } else { 0.0 };
    let mut v: Vec<f64> = (0..num_gpus).map(|i| 1.0 - width + step * i as f64).collect();
    v.shuffle(&mut rng);
    VariabilityProfile::new(vec![v])
}
