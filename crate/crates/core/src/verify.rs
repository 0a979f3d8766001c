//! Finite-difference gradient suite over every differentiable graph op and
//! the full backbone at a small size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::model::{Binding, DecoderPath, ModelConfig, PassState, UShapedModel};
use crate::tensor::gradcheck::{finite_diff_check, GradCheckReport};
use crate::tensor::{Graph, Tensor, Var};
use crate::Scalar;

type LossFn<T> = Box<dyn Fn(&mut Graph<T>, &[Var]) -> Result<Var>>;

/// One randomised gradient check: named inputs and the scalar function of them.
pub struct GradCase<T> {
    pub inputs: Vec<(String, Tensor<T>)>,
    pub loss: LossFn<T>,
}

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub case: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.report.passed())
    }

    pub fn worst(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.report.worst())
            .fold(0.0, f64::max)
    }

    /// `(case, worst error over seeds, all seeds passed)` in first-seen order.
    pub fn by_case(&self) -> Vec<(&'static str, f64, bool)> {
        let mut out: Vec<(&'static str, f64, bool)> = Vec::new();
        for e in &self.entries {
            match out.iter_mut().find(|(c, _, _)| *c == e.case) {
                Some(row) => {
                    row.1 = row.1.max(e.report.worst());
                    row.2 &= e.report.passed();
                }
                None => out.push((e.case, e.report.worst(), e.report.passed())),
            }
        }
        out
    }
}

fn randn<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("non-empty shape")
}

fn positive<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    randn::<T>(rng, shape).map(|v| T::of(0.5 + v.as_f64().abs()))
}

/// `Σ y ⊙ R` for a fixed random `R`, so every output element gets its own weight.
fn readout<T: Scalar>(g: &mut Graph<T>, y: Var, r: &Tensor<T>) -> Result<Var> {
    let w = g.mul_const(y, r.clone())?;
    g.sum(w)
}

fn named<T>(pairs: Vec<(&str, Tensor<T>)>) -> Vec<(String, Tensor<T>)> {
    pairs.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

/// Op cases by name. Each draws its inputs from `rng`.
pub const OP_CASES: [&str; 22] = [
    "matmul",
    "transpose",
    "reshape",
    "add",
    "sub",
    "mul",
    "add_row",
    "scale",
    "mul_const",
    "gelu",
    "square",
    "mean",
    "mse",
    "narrow_cols",
    "concat_cols",
    "conv1d_k2s2",
    "conv_transpose1d_k2s2",
    "pointwise_conv",
    "adaptive_avg_pool1d_down",
    "adaptive_avg_pool1d_up",
    "softmax_lastdim",
    "layer_norm",
];

pub const MODEL_CASES: [&str; 2] = ["backbone_reconstruct", "backbone_forecast_pooled"];

pub fn op_case<T: Scalar>(name: &str, rng: &mut ChaCha8Rng) -> GradCase<T> {
    let (inputs, loss): (Vec<(String, Tensor<T>)>, LossFn<T>) = match name {
        "matmul" => {
            let r = randn::<T>(rng, &[3, 2]);
            (
                named(vec![("a", randn(rng, &[3, 4])), ("b", randn(rng, &[4, 2]))]),
                Box::new(move |g, v| {
                    let y = g.matmul(v[0], v[1])?;
                    readout(g, y, &r)
                }),
            )
        }
        "transpose" => {
            let r = randn::<T>(rng, &[4, 3]);
            (
                named(vec![("x", randn(rng, &[3, 4]))]),
                Box::new(move |g, v| {
                    let y = g.transpose(v[0])?;
                    readout(g, y, &r)
                }),
            )
        }
        "reshape" => {
            let r = randn::<T>(rng, &[2, 6]);
            (
                named(vec![("x", randn(rng, &[3, 4]))]),
                Box::new(move |g, v| {
                    let y = g.reshape(v[0], &[2, 6])?;
                    readout(g, y, &r)
                }),
            )
        }
        "add" | "sub" | "mul" => {
            let r = randn::<T>(rng, &[3, 4]);
            let op = name.to_string();
            (
                named(vec![("a", randn(rng, &[3, 4])), ("b", randn(rng, &[3, 4]))]),
                Box::new(move |g, v| {
                    let y = match op.as_str() {
                        "add" => g.add(v[0], v[1])?,
                        "sub" => g.sub(v[0], v[1])?,
                        _ => g.mul(v[0], v[1])?,
                    };
                    readout(g, y, &r)
                }),
            )
        }
        "add_row" => {
            let r = randn::<T>(rng, &[3, 4]);
            (
                named(vec![("x", randn(rng, &[3, 4])), ("bias", randn(rng, &[4]))]),
                Box::new(move |g, v| {
                    let y = g.add_row(v[0], v[1])?;
                    readout(g, y, &r)
                }),
            )
        }
        "scale" => {
            let r = randn::<T>(rng, &[2, 5]);
            let s = T::of(rng.gen_range(-2.0..2.0));
            (
                named(vec![("x", randn(rng, &[2, 5]))]),
                Box::new(move |g, v| {
                    let y = g.scale(v[0], s)?;
                    readout(g, y, &r)
                }),
            )
        }
        "mul_const" => {
            let r = randn::<T>(rng, &[2, 5]);
            let c = randn::<T>(rng, &[2, 5]);
            (
                named(vec![("x", randn(rng, &[2, 5]))]),
                Box::new(move |g, v| {
                    let y = g.mul_const(v[0], c.clone())?;
                    readout(g, y, &r)
                }),
            )
        }
        "gelu" | "square" => {
            let r = randn::<T>(rng, &[3, 5]);
            let op = name.to_string();
            (
                named(vec![(
                    "x",
                    randn::<T>(rng, &[3, 5]).map(|v| v * T::of(2.0)),
                )]),
                Box::new(move |g, v| {
                    let y = if op == "gelu" {
                        g.gelu(v[0])?
                    } else {
                        g.square(v[0])?
                    };
                    readout(g, y, &r)
                }),
            )
        }
        "mean" => {
            let r = randn::<T>(rng, &[3, 5]);
            (
                named(vec![("x", randn(rng, &[3, 5]))]),
                Box::new(move |g, v| {
                    let y = g.mul_const(v[0], r.clone())?;
                    g.mean(y)
                }),
            )
        }
        "mse" => (
            named(vec![
                ("pred", randn(rng, &[2, 6])),
                ("target", randn(rng, &[2, 6])),
            ]),
            Box::new(|g, v| g.mse(v[0], v[1])),
        ),
        "narrow_cols" => {
            let r = randn::<T>(rng, &[3, 3]);
            (
                named(vec![("x", randn(rng, &[3, 7]))]),
                Box::new(move |g, v| {
                    let y = g.narrow_cols(v[0], 2, 3)?;
                    readout(g, y, &r)
                }),
            )
        }
        "concat_cols" => {
            let r = randn::<T>(rng, &[2, 6]);
            (
                named(vec![("a", randn(rng, &[2, 2])), ("b", randn(rng, &[2, 4]))]),
                Box::new(move |g, v| {
                    let y = g.concat_cols(&[v[0], v[1]])?;
                    readout(g, y, &r)
                }),
            )
        }
        "conv1d_k2s2" => {
            let r = randn::<T>(rng, &[4, 3]);
            (
                named(vec![
                    ("input", randn(rng, &[2, 6])),
                    ("weight", randn(rng, &[4, 2, 2])),
                    ("bias", randn(rng, &[4])),
                ]),
                Box::new(move |g, v| {
                    let y = g.conv1d_k2s2(v[0], v[1], v[2])?;
                    readout(g, y, &r)
                }),
            )
        }
        "conv_transpose1d_k2s2" => {
            let r = randn::<T>(rng, &[2, 6]);
            (
                named(vec![
                    ("input", randn(rng, &[4, 3])),
                    ("weight", randn(rng, &[4, 2, 2])),
                    ("bias", randn(rng, &[2])),
                ]),
                Box::new(move |g, v| {
                    let y = g.conv_transpose1d_k2s2(v[0], v[1], v[2])?;
                    readout(g, y, &r)
                }),
            )
        }
        "pointwise_conv" => {
            let r = randn::<T>(rng, &[3, 5]);
            (
                named(vec![
                    ("input", randn(rng, &[2, 5])),
                    ("weight", randn(rng, &[3, 2])),
                    ("bias", randn(rng, &[3])),
                ]),
                Box::new(move |g, v| {
                    let y = g.pointwise_conv(v[0], v[1], v[2])?;
                    readout(g, y, &r)
                }),
            )
        }
        "adaptive_avg_pool1d_down" | "adaptive_avg_pool1d_up" => {
            let (lin, lout) = if name.ends_with("down") {
                (11, 4)
            } else {
                (4, 11)
            };
            let r = randn::<T>(rng, &[2, lout]);
            (
                named(vec![("x", randn(rng, &[2, lin]))]),
                Box::new(move |g, v| {
                    let y = g.adaptive_avg_pool1d(v[0], lout)?;
                    readout(g, y, &r)
                }),
            )
        }
        "softmax_lastdim" => {
            let r = randn::<T>(rng, &[3, 5]);
            (
                named(vec![("x", randn(rng, &[3, 5]))]),
                Box::new(move |g, v| {
                    let y = g.softmax_lastdim(v[0])?;
                    readout(g, y, &r)
                }),
            )
        }
        "layer_norm" => {
            let r = randn::<T>(rng, &[3, 6]);
            (
                named(vec![
                    ("x", randn(rng, &[3, 6])),
                    ("gain", positive(rng, &[6])),
                    ("bias", randn(rng, &[6])),
                ]),
                Box::new(move |g, v| {
                    let y = g.layer_norm(v[0], v[1], v[2], T::of(1e-5))?;
                    readout(g, y, &r)
                }),
            )
        }
        other => panic!("unknown gradient case {other}"),
    };
    GradCase { inputs, loss }
}

/// Eight tokens of width 8 over two levels, patch size 2.
pub fn gradcheck_config(pooled: bool) -> ModelConfig {
    ModelConfig {
        lookback_len: if pooled { 10 } else { 12 },
        horizon_len: 4,
        patch_size: 2,
        patch_stride: 2,
        n_patches: 8,
        d_model: 8,
        n_levels: 2,
        n_layers_per_group: 1,
        n_heads: 2,
        ffn_mult: 2,
        mask_ratio: 0.25,
        dropout: 0.0,
    }
}

/// Loss of the whole model (embedding, every group, merge, split, skip sums
/// and one head) with every parameter and the input series as check inputs.
pub fn model_case<T: Scalar>(name: &str, rng: &mut ChaCha8Rng) -> GradCase<T> {
    let pooled = name == "backbone_forecast_pooled";
    let config = gradcheck_config(pooled);
    let model = UShapedModel::<T>::new(config.clone(), rng.gen()).expect("valid config");
    // larger position encodings so tokens differ visibly and attention is not uniform
    let mut inputs: Vec<(String, Tensor<T>)> = model
        .params
        .iter()
        .map(|(n, p)| {
            let t = if n == "embed.pos" {
                randn::<T>(rng, p.tensor.shape()).map(|v| v * T::of(0.5))
            } else {
                p.tensor.clone()
            };
            (n.clone(), t)
        })
        .collect();
    let len = config.model_len();
    inputs.push(("series".into(), randn(rng, &[1, len])));
    let out_len = if pooled { config.horizon_len } else { len };
    let r = randn::<T>(rng, &[1, out_len]);
    let names: Vec<String> = inputs.iter().map(|(n, _)| n.clone()).collect();
    let loss: LossFn<T> = Box::new(move |g, v| {
        let n = names.len();
        let b = Binding::from_pairs(
            names[..n - 1]
                .iter()
                .cloned()
                .zip(v[..n - 1].iter().copied()),
        );
        let series = v[n - 1];
        let grid = model.patch_embed(g, &b, series)?;
        let out =
            model.backbone_forward(g, &b, grid, DecoderPath::Full, &mut PassState::inference())?;
        let y = if pooled {
            model.forecast_head(g, &b, out.grid)?
        } else {
            model.reconstruction_head(g, &b, out.grid)?
        };
        readout(g, y, &r)
    });
    GradCase { inputs, loss }
}

pub fn check_case<T: Scalar>(case: GradCase<T>, tolerance: f64) -> Result<GradCheckReport> {
    finite_diff_check(case.loss, &case.inputs, tolerance)
}

/// Runs every op case and both model cases for each seed.
pub fn run_gradient_suite<T: Scalar>(
    seeds: std::ops::Range<u64>,
    tolerance: f64,
    include_model: bool,
) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for name in OP_CASES {
            let r = check_case(op_case::<T>(name, &mut rng), tolerance)?;
            report.entries.push(SuiteEntry {
                case: name,
                seed,
                report: r,
            });
        }
        if include_model {
            for name in MODEL_CASES {
                let r = check_case(model_case::<T>(name, &mut rng), tolerance)?;
                report.entries.push(SuiteEntry {
                    case: name,
                    seed,
                    report: r,
                });
            }
        }
    }
    Ok(report)
}
