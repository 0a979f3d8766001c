//! Jittered sliding windows and weighted dataset sampling.

use std::ops::Range;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Window stride τ.
    pub stride: usize,
    /// When set, each start is offset by an integer drawn from `[0, ⌊τ/2⌋]`.
    #[serde(default = "yes")]
    pub jitter: bool,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            stride: 1,
            jitter: true,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("sampler stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Seeded RNG for one epoch (and optionally one worker).
    pub fn epoch_rng(&self, epoch: u64, worker: u64) -> ChaCha8Rng {
        let mixed = (self.seed ^ worker).wrapping_add(epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        ChaCha8Rng::seed_from_u64(mixed)
    }
}

/// Window starts for one pass, plus any warnings raised while planning.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowPlan {
    pub starts: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Number of jittered windows of `window` points in `usable` points at stride `stride`.
pub fn window_count(usable: usize, window: usize, stride: usize) -> usize {
    let half = stride / 2;
    if window == 0 || usable < window + half {
        return 0;
    }
    (usable - window - half) / stride + 1
}

/// Starts `ℓ·τ + j` inside `range`, each window `window` points long.
///
/// `j` is 0 with jitter off, otherwise uniform on `[0, ⌊τ/2⌋]` per window.
/// Every window satisfies `start + window <= range.end`.
pub fn jittered_windows<R: Rng + ?Sized>(
    range: Range<usize>,
    window: usize,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> WindowPlan {
    let usable = range.len();
    let count = window_count(usable, window, sampler.stride);
    let mut plan = WindowPlan::default();
    if count == 0 {
        let msg = format!(
            "window of {window} (+ jitter {}) does not fit in {usable} usable points",
            sampler.stride / 2
        );
        log::warn!("{msg}");
        plan.warnings.push(msg);
        return plan;
    }
    let half = sampler.stride / 2;
    plan.starts = (0..count)
        .map(|l| {
            let j = if sampler.jitter && half > 0 {
                rng.gen_range(0..=half)
            } else {
                0
            };
            range.start + l * sampler.stride + j
        })
        .collect();
    plan
}

/// Selection weight of one window in dataset `d`: `1 / (X_d · D)`.
pub fn item_weight(window_count: usize, n_datasets: usize) -> f64 {
    1.0 / (window_count as f64 * n_datasets as f64)
}

/// Picks a dataset index, weighting each window by [`item_weight`].
///
/// Each dataset's total mass `X_d · 1/(X_d·D)` is `1/D`, so datasets are
/// drawn equally often regardless of size.
pub fn weighted_sample<R: Rng + ?Sized>(window_counts: &[usize], rng: &mut R) -> Result<usize> {
    if window_counts.is_empty() {
        return Err(Error::Usage(
            "weighted_sample needs at least one dataset".into(),
        ));
    }
    if let Some(i) = window_counts.iter().position(|&x| x == 0) {
        return Err(Error::Usage(format!("dataset {i} has no windows")));
    }
    let d = window_counts.len();
    let masses: Vec<f64> = window_counts
        .iter()
        .map(|&x| x as f64 * item_weight(x, d))
        .collect();
    let dist = WeightedIndex::new(&masses).map_err(|e| Error::Usage(e.to_string()))?;
    Ok(dist.sample(rng))
}
