//! Model-input assembly: prediction padding, pooling and zero-masking.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::{adaptive_avg_pool, Tensor};
use crate::Scalar;

/// Pools a lookback of any length to `L`, appends `T` copies of its last
/// value, and pools the result to `N · patch_size` points. Both poolings are
/// the identity when the lengths already agree.
pub fn build_model_input<T: Scalar>(window: &[T], config: &ModelConfig) -> Result<Tensor<T>> {
    if window.is_empty() {
        return Err(Error::Usage(
            "model input needs at least one lookback value".into(),
        ));
    }
    let mut padded = if window.len() == config.lookback_len {
        window.to_vec()
    } else {
        adaptive_avg_pool(window, config.lookback_len)
    };
    let last = *padded.last().expect("lookback_len >= 1");
    padded.extend(std::iter::repeat_n(last, config.horizon_len));
    let target = config.model_len();
    let data = if padded.len() == target {
        padded
    } else {
        adaptive_avg_pool(&padded, target)
    };
    Tensor::new([1, target], data)
}

/// Number of masked patches: `⌊ratio · n⌋`, tolerant of ratios like 0.29
/// whose product lands a hair under an integer.
pub fn masked_count(n_patches: usize, mask_ratio: f64) -> usize {
    ((mask_ratio * n_patches as f64) + 1e-9).floor() as usize
}

/// Picks `⌊ratio · N⌋` patches uniformly without replacement (partial
/// Fisher–Yates). `true` marks a masked patch.
pub fn zero_mask_patches<R: Rng + ?Sized>(
    n_patches: usize,
    mask_ratio: f64,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&mask_ratio) {
        return Err(Error::Usage(format!(
            "mask ratio {mask_ratio} outside [0, 1]"
        )));
    }
    let k = masked_count(n_patches, mask_ratio).min(n_patches);
    let mut idx: Vec<usize> = (0..n_patches).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n_patches);
        idx.swap(i, j);
    }
    let mut mask = vec![false; n_patches];
    for &i in &idx[..k] {
        mask[i] = true;
    }
    Ok(mask)
}

/// Zeroes every masked patch of a `1 × N·patch_size` sequence.
pub fn apply_patch_mask<T: Scalar>(
    series: &Tensor<T>,
    mask: &[bool],
    patch_size: usize,
) -> Result<Tensor<T>> {
    if series.len() != mask.len() * patch_size {
        return Err(Error::dim(
            "apply_patch_mask",
            format!(
                "{} values for {} patches of {patch_size}",
                series.len(),
                mask.len()
            ),
        ));
    }
    let mut out = series.clone();
    for (p, chunk) in out.data_mut().chunks_mut(patch_size).enumerate() {
        if mask[p] {
            chunk.iter_mut().for_each(|v| *v = T::zero());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_preset_pads_without_pooling() {
        let cfg = ModelConfig::small();
        let w: Vec<f32> = (0..512).map(|i| i as f32).collect();
        let x = build_model_input(&w, &cfg).unwrap();
        assert_eq!(x.shape(), &[1, 1536]);
        assert_eq!(&x.data()[..512], &w[..]);
        assert!(x.data()[512..].iter().all(|&v| v == 511.0));
    }

    #[test]
    fn long_lookback_is_pooled_and_constants_survive() {
        let cfg = ModelConfig {
            lookback_len: 700,
            ..ModelConfig::small()
        };
        let x = build_model_input(&[2.5f32; 700], &cfg).unwrap();
        assert_eq!(x.shape(), &[1, 1536]);
        assert!(x.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn other_lookback_lengths_pool_to_l_before_padding() {
        let cfg = ModelConfig::small();
        let w: Vec<f32> = (0..700).map(|i| if i < 350 { 0.0 } else { 1.0 }).collect();
        let x = build_model_input(&w, &cfg).unwrap();
        assert_eq!(x.shape(), &[1, 1536]);
        assert_eq!(x.data()[0], 0.0);
        assert!(x.data()[511..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_window_is_rejected() {
        assert!(build_model_input::<f32>(&[], &ModelConfig::tiny()).is_err());
    }

    #[test]
    fn mask_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(zero_mask_patches(48, 0.0, &mut rng)
            .unwrap()
            .iter()
            .all(|&m| !m));
        assert!(zero_mask_patches(48, 1.0, &mut rng)
            .unwrap()
            .iter()
            .all(|&m| m));
        let m = zero_mask_patches(48, 0.4, &mut rng).unwrap();
        assert_eq!(m.iter().filter(|&&b| b).count(), 19);
        assert_eq!(masked_count(100, 0.29), 29);
        assert!(zero_mask_patches(8, 1.5, &mut rng).is_err());
    }

    #[test]
    fn masking_zeroes_whole_patches() {
        let s = Tensor::<f32>::full([1, 12], 3.0);
        let out = apply_patch_mask(&s, &[false, true, false], 4).unwrap();
        assert_eq!(&out.data()[4..8], &[0.0; 4]);
        assert_eq!(out.data().iter().filter(|&&v| v == 3.0).count(), 8);
    }
}
