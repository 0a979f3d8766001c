//! Transformer building blocks: affine maps, multi-head self-attention and
//! pre-norm transformer layers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::config::LAYER_NORM_EPS;
use crate::model::params::{fan_in_uniform, Binding, ParameterStore};
use crate::tensor::{Graph, Tensor, Var};
use crate::Scalar;

/// Per-pass state. Dropout only fires when `dropout > 0` and an RNG is present.
pub struct PassState<'a> {
    pub dropout: f64,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl PassState<'_> {
    pub fn inference() -> Self {
        PassState {
            dropout: 0.0,
            rng: None,
        }
    }
}

pub(crate) fn dropout<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    pass: &mut PassState<'_>,
) -> Result<Var> {
    let rate = pass.dropout;
    let Some(rng) = pass.rng.as_deref_mut() else {
        return Ok(x);
    };
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mask = (0..n)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    g.mul_const(x, Tensor::new(shape, mask)?)
}

/// `x · W + b` with `W: [in × out]`.
pub(crate) fn linear<T: Scalar>(
    g: &mut Graph<T>,
    b: &Binding,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let w = b.var(&format!("{prefix}.weight"))?;
    let bias = b.var(&format!("{prefix}.bias"))?;
    let y = g.matmul(x, w)?;
    g.add_row(y, bias)
}

pub(crate) fn init_linear<T: Scalar, R: Rng>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<()> {
    store.insert(
        format!("{prefix}.weight"),
        fan_in_uniform(&[fan_in, fan_out], fan_in, rng),
    )?;
    store.insert(
        format!("{prefix}.bias"),
        fan_in_uniform(&[fan_out], fan_in, rng),
    )
}

fn init_norm<T: Scalar>(store: &mut ParameterStore<T>, prefix: &str, d: usize) -> Result<()> {
    store.insert(format!("{prefix}.gain"), Tensor::full([d], T::one()))?;
    store.insert(format!("{prefix}.bias"), Tensor::zeros([d]))
}

pub(crate) fn init_transformer_layer<T: Scalar, R: Rng>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    d: usize,
    ffn_mult: usize,
    rng: &mut R,
) -> Result<()> {
    init_norm(store, &format!("{prefix}.ln1"), d)?;
    for proj in ["wq", "wk", "wv", "wo"] {
        init_linear(store, &format!("{prefix}.attn.{proj}"), d, d, rng)?;
    }
    init_norm(store, &format!("{prefix}.ln2"), d)?;
    init_linear(store, &format!("{prefix}.ffn.up"), d, d * ffn_mult, rng)?;
    init_linear(store, &format!("{prefix}.ffn.down"), d * ffn_mult, d, rng)
}

fn norm<T: Scalar>(g: &mut Graph<T>, b: &Binding, prefix: &str, x: Var) -> Result<Var> {
    let gain = b.var(&format!("{prefix}.gain"))?;
    let bias = b.var(&format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias, T::of(LAYER_NORM_EPS))
}

/// Scaled dot-product self-attention over the rows of `x[P × D]`.
///
/// Returns the projected output and the head-averaged `P × P` weights.
pub(crate) fn self_attention<T: Scalar>(
    g: &mut Graph<T>,
    b: &Binding,
    prefix: &str,
    x: Var,
    n_heads: usize,
) -> Result<(Var, Tensor<T>)> {
    let (p, d) = g.value(x).dims2()?;
    let dh = d / n_heads;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let q = linear(g, b, &format!("{prefix}.wq"), x)?;
    let k = linear(g, b, &format!("{prefix}.wk"), x)?;
    let v = linear(g, b, &format!("{prefix}.wv"), x)?;
    let mut heads = Vec::with_capacity(n_heads);
    let mut avg = Tensor::zeros([p, p]);
    for h in 0..n_heads {
        let qh = g.narrow_cols(q, h * dh, dh)?;
        let kh = g.narrow_cols(k, h * dh, dh)?;
        let vh = g.narrow_cols(v, h * dh, dh)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale)?;
        let attn = g.softmax_lastdim(scores)?;
        for (a, &w) in avg.data_mut().iter_mut().zip(g.value(attn).data()) {
            *a = *a + w;
        }
        heads.push(g.matmul(attn, vh)?);
    }
    let inv = T::one() / T::of(n_heads as f64);
    for a in avg.data_mut() {
        *a = *a * inv;
    }
    let cat = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    let out = linear(g, b, &format!("{prefix}.wo"), cat)?;
    Ok((out, avg))
}

/// Pre-norm layer: `x + Attn(LN(x))`, then `x + FFN(LN(x))` with GELU.
pub(crate) fn transformer_layer<T: Scalar>(
    g: &mut Graph<T>,
    b: &Binding,
    prefix: &str,
    x: Var,
    n_heads: usize,
    pass: &mut PassState<'_>,
) -> Result<(Var, Tensor<T>)> {
    let h = norm(g, b, &format!("{prefix}.ln1"), x)?;
    let (a, weights) = self_attention(g, b, &format!("{prefix}.attn"), h, n_heads)?;
    let a = dropout(g, a, pass)?;
    let x = g.add(x, a)?;
    let h = norm(g, b, &format!("{prefix}.ln2"), x)?;
    let up = linear(g, b, &format!("{prefix}.ffn.up"), h)?;
    let act = g.gelu(up)?;
    let down = linear(g, b, &format!("{prefix}.ffn.down"), act)?;
    let down = dropout(g, down, pass)?;
    Ok((g.add(x, down)?, weights))
}
