//! Attention-map export and the known-vs-padded attention mass report.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::backbone::{AttentionMap, Side};
use crate::model::config::ModelConfig;
use crate::Scalar;

/// `v` with six significant digits, trailing zeros trimmed (like C's `%g`).
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        let s = format!("{v:.5e}");
        let (mant, e) = s.split_once('e').expect("exponent form");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        return format!("{mant}e{e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Row-major `P × P` CSV without a header.
pub fn attention_csv<T: Scalar>(map: &AttentionMap<T>) -> Result<String> {
    let (r, c) = map.weights.dims2()?;
    let mut out = String::with_capacity(r * c * 9);
    for i in 0..r {
        for j in 0..c {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&sig6(map.weights.at2(i, j).as_f64()));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn attention_file_name<T>(map: &AttentionMap<T>) -> String {
    format!("attn_{}_L{}.csv", map.side.as_str(), map.level)
}

/// Mean attention mass that fully-known query tokens put on fully-known keys
/// versus fully-padded keys, for one map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub side: Side,
    pub level: usize,
    pub known_queries: usize,
    pub known_keys: usize,
    pub padded_keys: usize,
    /// Mean over known queries of the summed weight on known keys.
    pub mass_known: f64,
    pub mass_padded: f64,
    /// The same masses divided by the number of keys in each region.
    pub per_key_known: f64,
    pub per_key_padded: f64,
}

/// Classifies tokens of a level as known (`Some(true)`), padded
/// (`Some(false)`) or straddling the boundary (`None`).
pub fn token_regions(config: &ModelConfig, level: usize) -> Vec<Option<bool>> {
    let (p, _) = config.level_shape(level);
    let width = config.model_len() as f64 / p as f64;
    let boundary = config.model_len() as f64 * config.lookback_len as f64
        / (config.lookback_len + config.horizon_len) as f64;
    (0..p)
        .map(|t| {
            let (s, e) = (t as f64 * width, (t + 1) as f64 * width);
            if e <= boundary + 1e-9 {
                Some(true)
            } else if s >= boundary - 1e-9 {
                Some(false)
            } else {
                None
            }
        })
        .collect()
}

pub fn mass_report<T: Scalar>(config: &ModelConfig, map: &AttentionMap<T>) -> Result<MassReport> {
    let regions = token_regions(config, map.level);
    let known: Vec<usize> = (0..regions.len())
        .filter(|&i| regions[i] == Some(true))
        .collect();
    let padded: Vec<usize> = (0..regions.len())
        .filter(|&i| regions[i] == Some(false))
        .collect();
    let (mut mk, mut mp) = (0.0, 0.0);
    for &q in &known {
        mk += known
            .iter()
            .map(|&k| map.weights.at2(q, k).as_f64())
            .sum::<f64>();
        mp += padded
            .iter()
            .map(|&k| map.weights.at2(q, k).as_f64())
            .sum::<f64>();
    }
    let nq = known.len().max(1) as f64;
    let (mk, mp) = (mk / nq, mp / nq);
    Ok(MassReport {
        side: map.side,
        level: map.level,
        known_queries: known.len(),
        known_keys: known.len(),
        padded_keys: padded.len(),
        mass_known: mk,
        mass_padded: mp,
        per_key_known: mk / known.len().max(1) as f64,
        per_key_padded: mp / padded.len().max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.25), "0.25");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(2.5e-7), "2.5e-7");
        assert_eq!(sig6(0.000123456789), "0.000123457");
    }

    #[test]
    fn regions_of_small_preset() {
        let c = ModelConfig::small();
        let r = token_regions(&c, 1);
        // 512 of 1536 points known: the first 16 of 48 tokens.
        assert_eq!(r.iter().filter(|x| **x == Some(true)).count(), 16);
        assert_eq!(r.iter().filter(|x| **x == Some(false)).count(), 32);
        assert_eq!(token_regions(&c, 3).len(), 12);
    }

    #[test]
    fn mass_of_uniform_map() {
        let c = ModelConfig::small();
        let p = 12;
        let map = AttentionMap {
            level: 3,
            side: Side::Enc,
            weights: Tensor::<f64>::full([p, p], 1.0 / p as f64),
        };
        let r = mass_report(&c, &map).unwrap();
        assert_eq!((r.known_keys, r.padded_keys), (4, 8));
        assert!((r.mass_known - 4.0 / 12.0).abs() < 1e-12);
        assert!((r.per_key_known - r.per_key_padded).abs() < 1e-12);
        let csv = attention_csv(&map).unwrap();
        assert_eq!(csv.lines().count(), 12);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 12);
    }
}
