//! Per-window standardisation with a low-variance guard.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Windows with population σ below this are only mean-centred.
pub const SIGMA_FLOOR: f64 = 0.01;

/// Statistics needed to undo [`normalize_sample`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: f64,
    pub sigma: f64,
}

impl NormStats {
    pub fn divides(&self) -> bool {
        self.sigma >= SIGMA_FLOOR
    }

    pub fn apply<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        if self.divides() {
            values
                .iter()
                .map(|&v| T::of((v.as_f64() - self.mu) / self.sigma))
                .collect()
        } else {
            values
                .iter()
                .map(|&v| T::of(v.as_f64() - self.mu))
                .collect()
        }
    }

    /// Inverse of [`NormStats::apply`] on the same branch.
    pub fn invert<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        if self.divides() {
            values
                .iter()
                .map(|&v| T::of(v.as_f64() * self.sigma + self.mu))
                .collect()
        } else {
            values
                .iter()
                .map(|&v| T::of(v.as_f64() + self.mu))
                .collect()
        }
    }
}

/// Mean and population standard deviation, accumulated in f64.
pub fn window_stats<T: Scalar>(window: &[T]) -> Result<NormStats> {
    if window.is_empty() {
        return Err(Error::Usage("cannot normalise an empty window".into()));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("normalize_sample"));
    }
    let n = window.len() as f64;
    let mu = window.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = window
        .iter()
        .map(|v| (v.as_f64() - mu).powi(2))
        .sum::<f64>()
        / n;
    Ok(NormStats {
        mu,
        sigma: var.sqrt(),
    })
}

/// `(S - μ)/σ` when σ ≥ 0.01, else `S - μ`.
pub fn normalize_sample<T: Scalar>(window: &[T]) -> Result<(Vec<T>, NormStats)> {
    let stats = window_stats(window)?;
    Ok((stats.apply(window), stats))
}

pub fn denormalize<T: Scalar>(values: &[T], stats: NormStats) -> Vec<T> {
    stats.invert(values)
}
