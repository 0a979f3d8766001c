//! The U-shaped backbone: patch embedding, encoder groups with learnable
//! patch merge, a shared bottleneck group, decoder groups with learnable
//! patch split, and elementwise encoder→decoder skip sums.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::layers::{init_linear, init_transformer_layer, transformer_layer, PassState};
use crate::model::params::{fan_in_uniform, normal, Binding, ParameterStore};
use crate::tensor::{Graph, Tensor, Var};
use crate::Scalar;

/// Position-encoding standard deviation at initialisation.
pub const POS_INIT_STD: f64 = 0.02;

/// Tokens at one resolution level: `P_level × D_level` on a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub tokens: Var,
    pub level: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Enc,
    Dec,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Enc => "enc",
            Side::Dec => "dec",
        }
    }
}

/// Head-averaged attention weights of the first layer in one group.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap<T> {
    pub level: usize,
    pub side: Side,
    pub weights: Tensor<T>,
}

/// Which decoder runs in [`UShapedModel::backbone_forward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DecoderPath {
    #[default]
    Full,
    /// Replaces the whole decoder stack with the zero function.
    Zero,
}

/// Output of the backbone with the attention maps collected on the way.
#[derive(Debug)]
pub struct BackboneOutput<T> {
    pub grid: PatchGrid,
    pub attention: Vec<AttentionMap<T>>,
}

/// A U-shaped forecaster: configuration plus its parameters.
///
/// Parameter names:
/// `embed.*`, `enc.L{i}.*` / `dec.L{i}.*` for levels below the deepest,
/// `mid.*` for the deepest (bottleneck) group, `merge.L{i}.*` and
/// `split.L{i}.*` between level `i` and `i+1`, and `head.recon.*` /
/// `head.forecast.*`. Everything outside `head.` is backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct UShapedModel<T> {
    pub config: ModelConfig,
    pub params: ParameterStore<T>,
}

pub fn is_head_param(name: &str) -> bool {
    name.starts_with("head.")
}

pub fn is_backbone_param(name: &str) -> bool {
    !is_head_param(name)
}

fn group_prefix(side: Side, level: usize, n_levels: usize) -> String {
    if level == n_levels {
        "mid".to_string()
    } else {
        format!("{}.L{level}", side.as_str())
    }
}

impl<T: Scalar> UShapedModel<T> {
    /// Fresh model with deterministic initialisation from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParameterStore::new();
        let (n, d, ps) = (config.n_patches, config.d_model, config.patch_size);

        s.insert("embed.weight", fan_in_uniform(&[d, ps], ps, &mut rng))?;
        s.insert("embed.bias", fan_in_uniform(&[d], ps, &mut rng))?;
        s.insert("embed.pos", normal(&[n, d], POS_INIT_STD, &mut rng))?;

        let layers = |s: &mut ParameterStore<T>,
                      prefix: &str,
                      dim: usize,
                      rng: &mut ChaCha8Rng|
         -> Result<()> {
            for l in 0..config.n_layers_per_group {
                init_transformer_layer(
                    s,
                    &format!("{prefix}.layer{l}"),
                    dim,
                    config.ffn_mult,
                    rng,
                )?;
            }
            Ok(())
        };
        for level in 1..config.n_levels {
            let (_, dim) = config.level_shape(level);
            layers(
                &mut s,
                &group_prefix(Side::Enc, level, config.n_levels),
                dim,
                &mut rng,
            )?;
            s.insert(
                format!("merge.L{level}.weight"),
                fan_in_uniform(&[2 * dim, dim, 2], 2 * dim, &mut rng),
            )?;
            s.insert(
                format!("merge.L{level}.bias"),
                fan_in_uniform(&[2 * dim], 2 * dim, &mut rng),
            )?;
        }
        let (_, deep_dim) = config.level_shape(config.n_levels);
        layers(&mut s, "mid", deep_dim, &mut rng)?;
        for level in (1..config.n_levels).rev() {
            let (_, dim) = config.level_shape(level);
            s.insert(
                format!("split.L{level}.weight"),
                fan_in_uniform(&[2 * dim, dim, 2], 2 * dim, &mut rng),
            )?;
            s.insert(
                format!("split.L{level}.bias"),
                fan_in_uniform(&[dim], 2 * dim, &mut rng),
            )?;
            layers(
                &mut s,
                &group_prefix(Side::Dec, level, config.n_levels),
                dim,
                &mut rng,
            )?;
        }
        init_linear(&mut s, "head.recon", d, ps, &mut rng)?;
        init_linear(&mut s, "head.forecast", d, ps, &mut rng)?;
        Ok(UShapedModel { config, params: s })
    }

    pub fn freeze_backbone(&mut self) {
        self.params.set_frozen(true, is_backbone_param);
        self.params.set_frozen(false, is_head_param);
    }

    pub fn unfreeze_all(&mut self) {
        self.params.set_frozen(false, |_| true);
    }

    pub fn backbone_digest(&self) -> String {
        self.params.digest(is_backbone_param)
    }

    /// Splits `series[1 × N·patch_size]` into N patches, embeds each with a
    /// shared pointwise convolution and adds the position table.
    pub fn patch_embed(&self, g: &mut Graph<T>, b: &Binding, series: Var) -> Result<PatchGrid> {
        let c = &self.config;
        let len = g.value(series).len();
        if !len.is_multiple_of(c.patch_size) {
            return Err(Error::dim(
                "patch_embed",
                format!("length {len} not divisible by patch size {}", c.patch_size),
            ));
        }
        if len / c.patch_size != c.n_patches {
            return Err(Error::dim(
                "patch_embed",
                format!(
                    "length {len} gives {} patches, model expects {}",
                    len / c.patch_size,
                    c.n_patches
                ),
            ));
        }
        let patches = g.reshape(series, &[c.n_patches, c.patch_size])?;
        let channels = g.transpose(patches)?;
        let embedded = g.pointwise_conv(channels, b.var("embed.weight")?, b.var("embed.bias")?)?;
        let tokens = g.transpose(embedded)?;
        let tokens = g.add(tokens, b.var("embed.pos")?)?;
        Ok(PatchGrid { tokens, level: 1 })
    }

    /// Runs one group of `n_layers_per_group` transformer layers.
    pub fn transformer_group(
        &self,
        g: &mut Graph<T>,
        b: &Binding,
        side: Side,
        grid: PatchGrid,
        pass: &mut PassState<'_>,
    ) -> Result<(PatchGrid, AttentionMap<T>)> {
        let prefix = group_prefix(side, grid.level, self.config.n_levels);
        let mut x = grid.tokens;
        let mut first = None;
        for l in 0..self.config.n_layers_per_group {
            let (y, w) = transformer_layer(
                g,
                b,
                &format!("{prefix}.layer{l}"),
                x,
                self.config.n_heads,
                pass,
            )?;
            x = y;
            first.get_or_insert(w);
        }
        let weights = first.expect("at least one layer per group");
        Ok((
            PatchGrid {
                tokens: x,
                level: grid.level,
            },
            AttentionMap {
                level: grid.level,
                side,
                weights,
            },
        ))
    }

    /// Learnable merge: kernel-2 stride-2 convolution over the token axis.
    pub fn patch_merge(&self, g: &mut Graph<T>, b: &Binding, grid: PatchGrid) -> Result<PatchGrid> {
        let (p, _) = g.value(grid.tokens).dims2()?;
        if p % 2 != 0 {
            return Err(Error::dim("patch_merge", format!("odd token count {p}")));
        }
        let lvl = grid.level;
        let ch = g.transpose(grid.tokens)?;
        let merged = g.conv1d_k2s2(
            ch,
            b.var(&format!("merge.L{lvl}.weight"))?,
            b.var(&format!("merge.L{lvl}.bias"))?,
        )?;
        let tokens = g.transpose(merged)?;
        Ok(PatchGrid {
            tokens,
            level: lvl + 1,
        })
    }

    /// Learnable split: transpose convolution back to level `level - 1`.
    pub fn patch_split(&self, g: &mut Graph<T>, b: &Binding, grid: PatchGrid) -> Result<PatchGrid> {
        if grid.level < 2 {
            return Err(Error::dim("patch_split", "cannot split below level 1"));
        }
        let lvl = grid.level - 1;
        let ch = g.transpose(grid.tokens)?;
        let split = g.conv_transpose1d_k2s2(
            ch,
            b.var(&format!("split.L{lvl}.weight"))?,
            b.var(&format!("split.L{lvl}.bias"))?,
        )?;
        let tokens = g.transpose(split)?;
        Ok(PatchGrid { tokens, level: lvl })
    }

    /// Encoder, bottleneck and decoder with skip sums.
    ///
    /// Encoder level `i` stores its output `O_i`; after the bottleneck each
    /// decoder step splits to level `i`, adds `O_i`, and runs the level-`i`
    /// decoder group. The top adds the first encoder input `I_1` to the
    /// decoder output. Attention maps are returned for encoder levels
    /// `1..=n_levels` (the bottleneck is the deepest encoder entry) and
    /// decoder levels `1..n_levels`.
    pub fn backbone_forward(
        &self,
        g: &mut Graph<T>,
        b: &Binding,
        grid: PatchGrid,
        decoder: DecoderPath,
        pass: &mut PassState<'_>,
    ) -> Result<BackboneOutput<T>> {
        let n_levels = self.config.n_levels;
        let expect = self.config.level_shape(1);
        if grid.level != 1 || g.value(grid.tokens).dims2()? != expect {
            return Err(Error::dim(
                "backbone_forward",
                format!(
                    "expected level-1 grid {:?}, got {:?}",
                    expect,
                    g.shape(grid.tokens)
                ),
            ));
        }
        let input = grid.tokens;
        let mut attention = Vec::with_capacity(2 * n_levels);
        let mut skips = Vec::with_capacity(n_levels);
        let mut x = grid;
        for _ in 1..n_levels {
            let (out, attn) = self.transformer_group(g, b, Side::Enc, x, pass)?;
            attention.push(attn);
            skips.push(out.tokens);
            x = self.patch_merge(g, b, out)?;
        }

        let decoded = match decoder {
            DecoderPath::Full => {
                let (mut y, attn) = self.transformer_group(g, b, Side::Enc, x, pass)?;
                attention.push(attn);
                while y.level > 1 {
                    let up = self.patch_split(g, b, y)?;
                    let skip = skips[up.level - 1];
                    let summed = g.add(up.tokens, skip)?;
                    let (out, attn) = self.transformer_group(
                        g,
                        b,
                        Side::Dec,
                        PatchGrid {
                            tokens: summed,
                            level: up.level,
                        },
                        pass,
                    )?;
                    attention.push(attn);
                    y = out;
                }
                y.tokens
            }
            DecoderPath::Zero => g.constant(Tensor::zeros(g.shape(input).to_vec())),
        };
        let tokens = g.add(decoded, input)?;
        Ok(BackboneOutput {
            grid: PatchGrid { tokens, level: 1 },
            attention,
        })
    }

    fn de_embed(
        &self,
        g: &mut Graph<T>,
        b: &Binding,
        prefix: &'static str,
        grid: PatchGrid,
    ) -> Result<Var> {
        let (p, d) = g.value(grid.tokens).dims2()?;
        if grid.level != 1 || d != self.config.d_model {
            return Err(Error::dim(
                prefix,
                format!("expected level-1 grid, got {p}×{d} at level {}", grid.level),
            ));
        }
        let y = crate::model::layers::linear(g, b, prefix, grid.tokens)?;
        g.reshape(y, &[1, p * self.config.patch_size])
    }

    /// Per-token linear map `d_model → patch_size`, tokens concatenated.
    pub fn reconstruction_head(
        &self,
        g: &mut Graph<T>,
        b: &Binding,
        grid: PatchGrid,
    ) -> Result<Var> {
        self.de_embed(g, b, "head.recon", grid)
    }

    /// De-embeds to the full padded length `L + T` and returns the last `T` values.
    pub fn forecast_head(&self, g: &mut Graph<T>, b: &Binding, grid: PatchGrid) -> Result<Var> {
        let c = &self.config;
        let mut seq = self.de_embed(g, b, "head.forecast", grid)?;
        let full = c.lookback_len + c.horizon_len;
        if full != c.model_len() {
            seq = g.adaptive_avg_pool1d(seq, full)?;
        }
        g.narrow_cols(seq, c.lookback_len, c.horizon_len)
    }

    /// Zero-masked (or plain) model input → reconstruction of the full sequence.
    pub fn reconstruct(
        &self,
        g: &mut Graph<T>,
        b: &Binding,
        series: Var,
        pass: &mut PassState<'_>,
    ) -> Result<(Var, Vec<AttentionMap<T>>)> {
        let grid = self.patch_embed(g, b, series)?;
        let out = self.backbone_forward(g, b, grid, DecoderPath::Full, pass)?;
        Ok((self.reconstruction_head(g, b, out.grid)?, out.attention))
    }

    /// Padded, pooled model input → `1 × T` forecast.
    pub fn forecast(
        &self,
        g: &mut Graph<T>,
        b: &Binding,
        series: Var,
        pass: &mut PassState<'_>,
    ) -> Result<(Var, Vec<AttentionMap<T>>)> {
        let grid = self.patch_embed(g, b, series)?;
        let out = self.backbone_forward(g, b, grid, DecoderPath::Full, pass)?;
        Ok((self.forecast_head(g, b, out.grid)?, out.attention))
    }

    /// Copies the reconstruction head into the forecast head.
    pub fn init_forecast_head_from_recon(&mut self) -> Result<()> {
        for part in ["weight", "bias"] {
            let t = self.params.tensor(&format!("head.recon.{part}"))?.clone();
            self.params.set(&format!("head.forecast.{part}"), t)?;
        }
        Ok(())
    }
}

/// Parameter-free merge: output token `t` is `token_t ‖ token_{t+P/2}`.
pub fn patch_merge_naive<T: Scalar>(g: &mut Graph<T>, grid: PatchGrid) -> Result<PatchGrid> {
    let (p, _) = g.value(grid.tokens).dims2()?;
    if p % 2 != 0 {
        return Err(Error::dim(
            "patch_merge_naive",
            format!("odd token count {p}"),
        ));
    }
    let ch = g.transpose(grid.tokens)?;
    let first = g.narrow_cols(ch, 0, p / 2)?;
    let second = g.narrow_cols(ch, p / 2, p / 2)?;
    let first = g.transpose(first)?;
    let second = g.transpose(second)?;
    let tokens = g.concat_cols(&[first, second])?;
    Ok(PatchGrid {
        tokens,
        level: grid.level + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> UShapedModel<f64> {
        UShapedModel::new(ModelConfig::tiny(), 7).unwrap()
    }

    fn series(g: &mut Graph<f64>, len: usize) -> Var {
        let data: Vec<f64> = (0..len).map(|i| (i as f64 * 0.3).sin()).collect();
        g.constant(Tensor::new([1, len], data).unwrap())
    }

    #[test]
    fn parameter_names_follow_levels() {
        let m = UShapedModel::<f32>::new(ModelConfig::small(), 0).unwrap();
        let names: Vec<&String> = m.params.names().collect();
        for expected in [
            "embed.pos",
            "enc.L1.layer0.attn.wq.weight",
            "merge.L2.weight",
            "mid.layer0.ffn.up.weight",
            "split.L1.weight",
            "dec.L2.layer0.ln1.gain",
            "head.forecast.bias",
        ] {
            assert!(
                names.iter().any(|n| n.as_str() == expected),
                "missing {expected}"
            );
        }
        assert_eq!(
            m.params.tensor("merge.L2.weight").unwrap().shape(),
            &[256, 128, 2]
        );
        assert_eq!(
            m.params.tensor("split.L2.weight").unwrap().shape(),
            &[256, 128, 2]
        );
    }

    #[test]
    fn init_is_deterministic() {
        let a = UShapedModel::<f32>::new(ModelConfig::tiny(), 3).unwrap();
        let b = UShapedModel::<f32>::new(ModelConfig::tiny(), 3).unwrap();
        let c = UShapedModel::<f32>::new(ModelConfig::tiny(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn embed_rejects_wrong_length() {
        let m = tiny();
        let mut g = Graph::new();
        let b = m.params.bind(&mut g);
        let s = series(&mut g, 60);
        assert!(matches!(
            m.patch_embed(&mut g, &b, s),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_embedding_yields_position_table() {
        let mut m = tiny();
        m.params
            .set("embed.weight", Tensor::zeros([16, 8]))
            .unwrap();
        m.params.set("embed.bias", Tensor::zeros([16])).unwrap();
        let mut g = Graph::new();
        let b = m.params.bind(&mut g);
        let s = series(&mut g, 64);
        let grid = m.patch_embed(&mut g, &b, s).unwrap();
        assert_eq!(g.value(grid.tokens), m.params.tensor("embed.pos").unwrap());
    }

    #[test]
    fn merge_split_round_trip_shapes() {
        let m = UShapedModel::<f32>::new(ModelConfig::small(), 1).unwrap();
        let mut g = Graph::new();
        let b = m.params.bind_constant(&mut g);
        let x = g.constant(Tensor::full([48, 64], 0.1));
        let grid = PatchGrid {
            tokens: x,
            level: 1,
        };
        let merged = m.patch_merge(&mut g, &b, grid).unwrap();
        assert_eq!(g.shape(merged.tokens), &[24, 128]);
        let split = m.patch_split(&mut g, &b, merged).unwrap();
        assert_eq!(g.shape(split.tokens), &[48, 64]);
        assert_eq!(split.level, 1);

        let odd = g.constant(Tensor::zeros([7, 64]));
        assert!(m
            .patch_merge(
                &mut g,
                &b,
                PatchGrid {
                    tokens: odd,
                    level: 1
                }
            )
            .is_err());
    }

    #[test]
    fn zero_merge_and_split_weights() {
        let mut m = tiny();
        m.params
            .set("merge.L1.weight", Tensor::zeros([32, 16, 2]))
            .unwrap();
        m.params.set("merge.L1.bias", Tensor::zeros([32])).unwrap();
        m.params
            .set("split.L1.weight", Tensor::zeros([32, 16, 2]))
            .unwrap();
        let split_bias = m.params.tensor("split.L1.bias").unwrap().clone();
        let mut g = Graph::new();
        let b = m.params.bind_constant(&mut g);
        let x = g.constant(Tensor::full([8, 16], 0.7));
        let merged = m
            .patch_merge(
                &mut g,
                &b,
                PatchGrid {
                    tokens: x,
                    level: 1,
                },
            )
            .unwrap();
        assert!(g.value(merged.tokens).data().iter().all(|&v| v == 0.0));
        let split = m.patch_split(&mut g, &b, merged).unwrap();
        for r in 0..8 {
            for c in 0..16 {
                assert_eq!(g.value(split.tokens).at2(r, c), split_bias.data()[c]);
            }
        }
    }

    #[test]
    fn naive_merge_pairs_halves() {
        let mut g = Graph::<f64>::new();
        // tokens a,b,c,d with 1-D features
        let x = g.constant(Tensor::from_f64([4, 1], &[1., 2., 3., 4.]).unwrap());
        let y = patch_merge_naive(
            &mut g,
            PatchGrid {
                tokens: x,
                level: 1,
            },
        )
        .unwrap();
        assert_eq!(g.shape(y.tokens), &[2, 2]);
        assert_eq!(g.value(y.tokens).data(), &[1., 3., 2., 4.]);
        let z = g.constant(Tensor::zeros([48, 64]));
        let y = patch_merge_naive(
            &mut g,
            PatchGrid {
                tokens: z,
                level: 1,
            },
        )
        .unwrap();
        assert_eq!(g.shape(y.tokens), &[24, 128]);
    }

    #[test]
    fn single_token_attention_is_one() {
        let cfg = ModelConfig {
            n_patches: 1,
            n_levels: 1,
            ..ModelConfig::tiny()
        };
        let m = UShapedModel::<f64>::new(cfg, 2).unwrap();
        let mut g = Graph::new();
        let b = m.params.bind_constant(&mut g);
        let x = g.constant(Tensor::full([1, 16], 0.3));
        let (_, attn) = m
            .transformer_group(
                &mut g,
                &b,
                Side::Enc,
                PatchGrid {
                    tokens: x,
                    level: 1,
                },
                &mut PassState::inference(),
            )
            .unwrap();
        assert_eq!(attn.weights.data(), &[1.0]);
    }

    #[test]
    fn backbone_shapes_and_attention_rows() {
        let m = UShapedModel::<f32>::new(ModelConfig::small(), 5).unwrap();
        let mut g = Graph::new();
        let b = m.params.bind_constant(&mut g);
        let data: Vec<f32> = (0..1536).map(|i| (i as f32 * 0.05).sin()).collect();
        let s = g.constant(Tensor::new([1, 1536], data).unwrap());
        let grid = m.patch_embed(&mut g, &b, s).unwrap();
        assert_eq!(g.shape(grid.tokens), &[48, 64]);
        let out = m
            .backbone_forward(
                &mut g,
                &b,
                grid,
                DecoderPath::Full,
                &mut PassState::inference(),
            )
            .unwrap();
        assert_eq!(g.shape(out.grid.tokens), &[48, 64]);
        let sizes: Vec<(Side, usize, usize)> = out
            .attention
            .iter()
            .map(|a| (a.side, a.level, a.weights.shape()[0]))
            .collect();
        assert_eq!(
            sizes,
            vec![
                (Side::Enc, 1, 48),
                (Side::Enc, 2, 24),
                (Side::Enc, 3, 12),
                (Side::Dec, 2, 24),
                (Side::Dec, 1, 48)
            ]
        );
        for a in &out.attention {
            let n = a.weights.shape()[1];
            for row in a.weights.data().chunks(n) {
                let s: f32 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-5);
                assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            }
        }
        let recon = m.reconstruction_head(&mut g, &b, out.grid).unwrap();
        assert_eq!(g.shape(recon), &[1, 1536]);
        let fc = m.forecast_head(&mut g, &b, out.grid).unwrap();
        assert_eq!(g.shape(fc), &[1, 1024]);
    }

    #[test]
    fn zero_head_gives_bias_pattern() {
        let mut m = tiny();
        m.params
            .set("head.recon.weight", Tensor::zeros([16, 8]))
            .unwrap();
        let bias = Tensor::from_f64([8], &[1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        m.params.set("head.recon.bias", bias.clone()).unwrap();
        m.params
            .set("head.forecast.weight", Tensor::zeros([16, 8]))
            .unwrap();
        m.params
            .set("head.forecast.bias", Tensor::full([8], 2.5))
            .unwrap();
        let mut g = Graph::new();
        let b = m.params.bind_constant(&mut g);
        let s = series(&mut g, 64);
        let (rec, _) = m
            .reconstruct(&mut g, &b, s, &mut PassState::inference())
            .unwrap();
        let v = g.value(rec).data();
        for (i, &x) in v.iter().enumerate() {
            assert_eq!(x, bias.data()[i % 8]);
        }
        let (fc, _) = m
            .forecast(&mut g, &b, s, &mut PassState::inference())
            .unwrap();
        assert_eq!(g.shape(fc), &[1, 16]);
        assert!(g.value(fc).data().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn forecast_head_pools_when_lengths_differ() {
        let cfg = ModelConfig {
            lookback_len: 70,
            ..ModelConfig::tiny()
        };
        let m = UShapedModel::<f64>::new(cfg, 1).unwrap();
        let mut g = Graph::new();
        let b = m.params.bind_constant(&mut g);
        let s = series(&mut g, 64);
        let (fc, _) = m
            .forecast(&mut g, &b, s, &mut PassState::inference())
            .unwrap();
        assert_eq!(g.shape(fc), &[1, 16]);
    }
}
