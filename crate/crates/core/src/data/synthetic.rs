//! Built-in synthetic series: sines and logarithmic trends.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::frame::SeriesFrame;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSpec {
    /// `amplitude · sin(2π t / period + phase) + offset`.
    Sine {
        length: usize,
        period: f64,
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `scale · ln(1 + t / rate) + offset`.
    LogTrend {
        length: usize,
        #[serde(default = "unit")]
        scale: f64,
        #[serde(default = "hundred")]
        rate: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn unit() -> f64 {
    1.0
}
fn hundred() -> f64 {
    100.0
}

impl SyntheticSpec {
    pub fn sine(length: usize, period: f64) -> Self {
        SyntheticSpec::Sine {
            length,
            period,
            amplitude: 1.0,
            phase: 0.0,
            offset: 0.0,
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn generate<T: Scalar>(&self, dataset_id: &str) -> Result<SeriesFrame<T>> {
        let (length, noise_std, seed) = match *self {
            SyntheticSpec::Sine {
                length,
                noise_std,
                seed,
                ..
            }
            | SyntheticSpec::LogTrend {
                length,
                noise_std,
                seed,
                ..
            } => (length, noise_std, seed),
        };
        if length < 2 {
            return Err(Error::Config(format!(
                "synthetic series {dataset_id} needs length >= 2"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise =
            Normal::new(0.0, noise_std.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
        let values: Vec<T> = (0..length)
            .map(|t| {
                let t = t as f64;
                let clean = match *self {
                    SyntheticSpec::Sine {
                        period,
                        amplitude,
                        phase,
                        offset,
                        ..
                    } => {
                        amplitude * (2.0 * std::f64::consts::PI * t / period + phase).sin() + offset
                    }
                    SyntheticSpec::LogTrend {
                        scale,
                        rate,
                        offset,
                        ..
                    } => scale * (1.0 + t / rate).ln() + offset,
                };
                let eps = if noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                T::of(clean + eps)
            })
            .collect();
        SeriesFrame::new(
            dataset_id,
            vec!["value".into()],
            Tensor::new([1, length], values)?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_is_periodic() {
        let f: SeriesFrame<f64> = SyntheticSpec::sine(100, 25.0).generate("sin").unwrap();
        let c = f.channel(0);
        assert!(c[0].abs() < 1e-12);
        assert!((c[25] - c[0]).abs() < 1e-9);
        assert!((c[6] - (2.0 * std::f64::consts::PI * 6.0 / 25.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn log_trend_is_monotone() {
        let spec: SyntheticSpec =
            serde_json::from_str(r#"{"kind":"log_trend","length":50}"#).unwrap();
        let f: SeriesFrame<f32> = spec.generate("log").unwrap();
        assert!(f.channel(0).windows(2).all(|w| w[1] > w[0]));
    }
}
