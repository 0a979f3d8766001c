use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and capacity of a U-shaped forecaster.
///
/// `n_patches` is the token count N the backbone runs at. The model input is
/// always `N · patch_size` long; a lookback of any length is padded with `T`
/// copies of its last value and pooled to that length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lookback_len: usize,
    pub horizon_len: usize,
    pub patch_size: usize,
    pub patch_stride: usize,
    pub n_patches: usize,
    pub d_model: usize,
    pub n_levels: usize,
    #[serde(default = "one")]
    pub n_layers_per_group: usize,
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    #[serde(default = "default_ffn_mult")]
    pub ffn_mult: usize,
    #[serde(default = "default_mask_ratio")]
    pub mask_ratio: f64,
    #[serde(default)]
    pub dropout: f64,
}

fn one() -> usize {
    1
}
fn default_heads() -> usize {
    4
}
fn default_ffn_mult() -> usize {
    4
}
fn default_mask_ratio() -> f64 {
    0.4
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl ModelConfig {
    /// 512 lookback, 1024 horizon, 32-step patches, 48 tokens.
    pub fn small() -> Self {
        ModelConfig {
            lookback_len: 512,
            horizon_len: 1024,
            patch_size: 32,
            patch_stride: 32,
            n_patches: 48,
            d_model: 64,
            n_levels: 3,
            n_layers_per_group: 1,
            n_heads: 4,
            ffn_mult: 4,
            mask_ratio: 0.4,
            dropout: 0.0,
        }
    }

    /// 3072 lookback, 1024 horizon, 32-step patches, 128 tokens.
    pub fn base() -> Self {
        ModelConfig {
            lookback_len: 3072,
            horizon_len: 1024,
            n_patches: 128,
            d_model: 128,
            ..Self::small()
        }
    }

    /// Desk-scale configuration used by tests and quick experiments.
    pub fn tiny() -> Self {
        ModelConfig {
            lookback_len: 48,
            horizon_len: 16,
            patch_size: 8,
            patch_stride: 8,
            n_patches: 8,
            d_model: 16,
            n_levels: 2,
            n_layers_per_group: 1,
            n_heads: 2,
            ffn_mult: 2,
            mask_ratio: 0.4,
            dropout: 0.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "small" => Some(Self::small()),
            "base" => Some(Self::base()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [
            ("lookback_len", self.lookback_len),
            ("horizon_len", self.horizon_len),
            ("patch_size", self.patch_size),
            ("n_patches", self.n_patches),
            ("d_model", self.d_model),
            ("n_levels", self.n_levels),
            ("n_layers_per_group", self.n_layers_per_group),
            ("n_heads", self.n_heads),
            ("ffn_mult", self.ffn_mult),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.patch_stride != self.patch_size {
            return bad(format!(
                "patch_stride ({}) must equal patch_size ({}); overlapping patches are not supported",
                self.patch_stride, self.patch_size
            ));
        }
        let deepest = 1usize << (self.n_levels - 1);
        if !self.n_patches.is_multiple_of(deepest) {
            return bad(format!(
                "n_patches ({}) must be divisible by 2^(n_levels-1) = {deepest}",
                self.n_patches
            ));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad(format!("mask_ratio {} outside [0, 1]", self.mask_ratio));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Length of the pooled model input, `N · patch_size`.
    pub fn model_len(&self) -> usize {
        self.n_patches * self.patch_size
    }

    /// `(tokens, dim)` at 1-based `level`.
    pub fn level_shape(&self, level: usize) -> (usize, usize) {
        let f = 1usize << (level - 1);
        (self.n_patches / f, self.d_model * f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_follow_token_arithmetic() {
        let s = ModelConfig::small();
        assert_eq!((s.lookback_len + s.horizon_len) / s.patch_size, 48);
        assert_eq!(s.n_patches, 48);
        let b = ModelConfig::base();
        assert_eq!((b.lookback_len + b.horizon_len) / b.patch_size, 128);
        assert_eq!(b.n_patches, 128);
        for c in [s, b, ModelConfig::tiny()] {
            c.validate().unwrap();
            assert_eq!(c.model_len(), c.n_patches * c.patch_size);
        }
    }

    #[test]
    fn level_tower_conserves_scalars() {
        let c = ModelConfig::small();
        assert_eq!(c.level_shape(1), (48, 64));
        assert_eq!(c.level_shape(2), (24, 128));
        assert_eq!(c.level_shape(3), (12, 256));
        for lvl in 1..=3 {
            let (p, d) = c.level_shape(lvl);
            assert_eq!(p * d, 48 * 64);
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = ModelConfig::tiny();
        c.n_levels = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.patch_stride = 4;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.mask_ratio = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(ModelConfig::tiny()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelConfig>(v).is_err());
    }
}
