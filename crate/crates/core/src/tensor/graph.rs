//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only tape. Every op evaluates eagerly, checks its
//! output for non-finite values and records enough of its inputs to produce a
//! vector-Jacobian product later. Because inputs always precede their
//! consumers on the tape, walking it backwards is a reverse topological order.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Scalar;

/// Handle to a node on a [`Graph`]. Only meaningful for the graph that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    MulConst(Var, Tensor<T>),
    Transpose(Var),
    Reshape(Var),
    NarrowCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Conv1dK2S2 {
        x: Var,
        w: Var,
        b: Var,
    },
    ConvTranspose1dK2S2 {
        x: Var,
        w: Var,
        b: Var,
    },
    Pointwise {
        x: Var,
        w: Var,
        b: Var,
    },
    AdaptivePool {
        x: Var,
    },
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gelu(Var),
    Square(Var),
    Mean(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// An autodiff tape. Confined to one thread; build a fresh one per forward pass.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0].clone()))
    }

    /// Gradient for `v` only if one reached it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }
}

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let y = half * x * (T::one() + th);
    let dy = half * (T::one() + th)
        + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0) * a * x * x);
    (y, dy)
}

/// Bin `t` of an adaptive pool from `len_in` to `len_out`: [floor(t·in/out), ceil((t+1)·in/out)).
pub(crate) fn pool_bin(t: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let start = t * len_in / len_out;
    let end = ((t + 1) * len_in).div_ceil(len_out);
    (start, end)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    /// Leaf that receives a gradient on [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        inputs: &[Var],
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::numeric(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        self.value(v)
            .dims2()
            .map_err(|_| Error::dim(op, format!("expected 2-D operand, got {:?}", self.shape(v))))
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(Error::dim("matmul", format!("inner extents {k} vs {k2}")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(
            "matmul",
            Tensor::from_parts(vec![m, n], out),
            Op::MatMul(a, b),
            &[a, b],
        )
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.dims2("transpose", x)?;
        let t = self.value(x).transpose2()?;
        self.push("transpose", t, Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self
            .value(x)
            .reshape(shape.to_vec())
            .map_err(|_| Error::dim("reshape", format!("{:?} -> {shape:?}", self.shape(x))))?;
        self.push("reshape", t, Op::Reshape(x), &[x])
    }

    // ---- elementwise ----------------------------------------------------

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_parts(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip(a, b, |x, y| x + y);
        self.push("add", t, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip(a, b, |x, y| x - y);
        self.push("sub", t, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip(a, b, |x, y| x * y);
        self.push("mul", t, Op::Mul(a, b), &[a, b])
    }

    /// `x[.., j] + bias[j]`, broadcasting a vector over the last dimension.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = self.value(x).last_dim();
        if self.value(bias).len() != n {
            return Err(Error::dim(
                "add_row",
                format!("bias of {} for last dim {n}", self.value(bias).len()),
            ));
        }
        let b = self.value(bias).data();
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % n])
            .collect();
        let t = Tensor::from_parts(xv.shape().to_vec(), data);
        self.push("add_row", t, Op::AddRow(x, bias), &[x, bias])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let t = self.value(x).map(|v| v * s);
        self.push("scale", t, Op::Scale(x, s), &[x])
    }

    /// Elementwise product with a non-differentiable mask or weight.
    pub fn mul_const(&mut self, x: Var, c: Tensor<T>) -> Result<Var> {
        if c.shape() != self.shape(x) {
            return Err(Error::dim(
                "mul_const",
                format!("{:?} vs {:?}", c.shape(), self.shape(x)),
            ));
        }
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .zip(c.data())
            .map(|(&a, &b)| a * b)
            .collect();
        let t = Tensor::from_parts(xv.shape().to_vec(), data);
        self.push("mul_const", t, Op::MulConst(x, c), &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| gelu_parts(v).0);
        self.push("gelu", t, Op::Gelu(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| v * v);
        self.push("square", t, Op::Square(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(x).sum());
        self.push("sum", t, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::scalar(v.sum() / T::of(v.len() as f64));
        self.push("mean", t, Op::Mean(x), &[x])
    }

    /// Mean squared error between two same-shape tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.square(d)?;
        self.mean(sq)
    }

    // ---- slicing --------------------------------------------------------

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn narrow_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2("narrow_cols", x)?;
        if len == 0 || start + len > c {
            return Err(Error::dim(
                "narrow_cols",
                format!("{start}+{len} exceeds {c} columns"),
            ));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&xv[i * c + start..i * c + start + len]);
        }
        self.push(
            "narrow_cols",
            Tensor::from_parts(vec![r, len], out),
            Op::NarrowCols { x, start },
            &[x],
        )
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::dim("concat_cols", "no inputs"));
        };
        let (r, _) = self.dims2("concat_cols", first)?;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (ri, ci) = self.dims2("concat_cols", x)?;
            if ri != r {
                return Err(Error::dim("concat_cols", format!("row counts {r} vs {ri}")));
            }
            widths.push(ci);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&x, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x).data()[i * w..(i + 1) * w]);
            }
        }
        self.push(
            "concat_cols",
            Tensor::from_parts(vec![r, total], out),
            Op::ConcatCols(xs.to_vec()),
            xs,
        )
    }

    // ---- convolutions and pooling ----------------------------------------

    /// Kernel-2 stride-2 1-D convolution over `input[C_in × P]`.
    ///
    /// `weight` is `[C_out × C_in × 2]`; output is `[C_out × P/2]`.
    pub fn conv1d_k2s2(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (cin, p) = self.dims2("conv1d_k2s2", input)?;
        if p < 2 || p % 2 != 0 {
            return Err(Error::dim(
                "conv1d_k2s2",
                format!("length {p} must be even and >= 2"),
            ));
        }
        let ws = self.shape(weight).to_vec();
        if ws.len() != 3 || ws[1] != cin || ws[2] != 2 {
            return Err(Error::dim(
                "conv1d_k2s2",
                format!("weight {ws:?} for {cin} input channels"),
            ));
        }
        let cout = ws[0];
        if self.value(bias).len() != cout {
            return Err(Error::dim(
                "conv1d_k2s2",
                format!("bias length {} for {cout} outputs", self.value(bias).len()),
            ));
        }
        let (x, w, b) = (
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let half = p / 2;
        let mut out = vec![T::zero(); cout * half];
        for j in 0..cout {
            for t in 0..half {
                let mut acc = b[j];
                for k in 0..cin {
                    let wk = &w[(j * cin + k) * 2..(j * cin + k) * 2 + 2];
                    acc = acc + wk[0] * x[k * p + 2 * t] + wk[1] * x[k * p + 2 * t + 1];
                }
                out[j * half + t] = acc;
            }
        }
        let t = Tensor::from_parts(vec![cout, half], out);
        self.push(
            "conv1d_k2s2",
            t,
            Op::Conv1dK2S2 {
                x: input,
                w: weight,
                b: bias,
            },
            &[input, weight, bias],
        )
    }

    /// Kernel-2 stride-2 transpose convolution over `input[C_in × P]`.
    ///
    /// `weight` is `[C_in × C_out × 2]`; output is `[C_out × 2P]`.
    pub fn conv_transpose1d_k2s2(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (cin, p) = self.dims2("conv_transpose1d_k2s2", input)?;
        let ws = self.shape(weight).to_vec();
        if ws.len() != 3 || ws[0] != cin || ws[2] != 2 {
            return Err(Error::dim(
                "conv_transpose1d_k2s2",
                format!("weight {ws:?} for {cin} input channels"),
            ));
        }
        let cout = ws[1];
        if self.value(bias).len() != cout {
            return Err(Error::dim(
                "conv_transpose1d_k2s2",
                format!("bias length {} for {cout} outputs", self.value(bias).len()),
            ));
        }
        let (x, w, b) = (
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let len = 2 * p;
        let mut out = vec![T::zero(); cout * len];
        for j in 0..cout {
            for pos in 0..len {
                out[j * len + pos] = b[j];
            }
        }
        for k in 0..cin {
            for j in 0..cout {
                let w0 = w[(k * cout + j) * 2];
                let w1 = w[(k * cout + j) * 2 + 1];
                for t in 0..p {
                    let xv = x[k * p + t];
                    out[j * len + 2 * t] = out[j * len + 2 * t] + w0 * xv;
                    out[j * len + 2 * t + 1] = out[j * len + 2 * t + 1] + w1 * xv;
                }
            }
        }
        let t = Tensor::from_parts(vec![cout, len], out);
        self.push(
            "conv_transpose1d_k2s2",
            t,
            Op::ConvTranspose1dK2S2 {
                x: input,
                w: weight,
                b: bias,
            },
            &[input, weight, bias],
        )
    }

    /// Kernel-1 convolution: `weight[C_out × C_in] · input[C_in × P] + bias`.
    pub fn pointwise_conv(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (cin, p) = self.dims2("pointwise_conv", input)?;
        let (cout, cin2) = self.dims2("pointwise_conv", weight)?;
        if cin != cin2 {
            return Err(Error::dim(
                "pointwise_conv",
                format!("weight expects {cin2} channels, input has {cin}"),
            ));
        }
        if self.value(bias).len() != cout {
            return Err(Error::dim(
                "pointwise_conv",
                format!("bias length {} for {cout} outputs", self.value(bias).len()),
            ));
        }
        let mut out = matmul_raw(
            self.value(weight).data(),
            self.value(input).data(),
            cout,
            cin,
            p,
        );
        let b = self.value(bias).data();
        for j in 0..cout {
            for v in &mut out[j * p..(j + 1) * p] {
                *v = *v + b[j];
            }
        }
        let t = Tensor::from_parts(vec![cout, p], out);
        self.push(
            "pointwise_conv",
            t,
            Op::Pointwise {
                x: input,
                w: weight,
                b: bias,
            },
            &[input, weight, bias],
        )
    }

    /// Adaptive average pooling of `input[C × L_in]` to `C × out_len`.
    pub fn adaptive_avg_pool1d(&mut self, input: Var, out_len: usize) -> Result<Var> {
        let (c, len_in) = self.dims2("adaptive_avg_pool1d", input)?;
        if out_len == 0 {
            return Err(Error::dim(
                "adaptive_avg_pool1d",
                "output length must be positive",
            ));
        }
        let x = self.value(input).data();
        let mut out = vec![T::zero(); c * out_len];
        for t in 0..out_len {
            let (s, e) = pool_bin(t, len_in, out_len);
            let inv = T::one() / T::of((e - s) as f64);
            for ch in 0..c {
                let acc: T = x[ch * len_in + s..ch * len_in + e].iter().copied().sum();
                out[ch * out_len + t] = acc * inv;
            }
        }
        let t = Tensor::from_parts(vec![c, out_len], out);
        self.push(
            "adaptive_avg_pool1d",
            t,
            Op::AdaptivePool { x: input },
            &[input],
        )
    }

    // ---- normalisation --------------------------------------------------

    /// Numerically stable softmax over the last dimension.
    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.last_dim();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z = z + *v;
            }
            for v in row.iter_mut() {
                *v = *v / z;
            }
        }
        let t = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push("softmax_lastdim", t, Op::Softmax(x), &[x])
    }

    /// Layer normalisation over the last dimension with population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.last_dim();
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(Error::dim(
                "layer_norm",
                format!("affine parameters must have length {d}"),
            ));
        }
        if eps <= T::zero() {
            return Err(Error::Usage("layer_norm eps must be positive".into()));
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = xv.len() / d;
        let dn = T::of(d as f64);
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(d) {
            let mu = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / dn;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mu) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let t = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(
            "layer_norm",
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        )
    }

    // ---- reverse pass ---------------------------------------------------

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_parts(
            self.shape(loss).to_vec(),
            vec![T::one()],
        ));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (v, contrib) in self.vjp(node, &g) {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a = *a + *c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        // only leaves keep their gradients
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn vjp(&self, node: &Node<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let gd = g.data();
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                let mut out = Vec::new();
                if wants(*a) {
                    // g[m×n] · bᵀ[n×k]
                    let bd = val(*b).data();
                    let mut da = vec![T::zero(); m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = T::zero();
                            for j in 0..n {
                                acc = acc + gd[i * n + j] * bd[p * n + j];
                            }
                            da[i * k + p] = acc;
                        }
                    }
                    out.push((*a, Tensor::from_parts(vec![m, k], da)));
                }
                if wants(*b) {
                    // aᵀ[k×m] · g[m×n]
                    let ad = val(*a).data();
                    let mut db = vec![T::zero(); k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let av = ad[i * k + p];
                            for j in 0..n {
                                db[p * n + j] = db[p * n + j] + av * gd[i * n + j];
                            }
                        }
                    }
                    out.push((*b, Tensor::from_parts(vec![k, n], db)));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let da = mul_elem(g, val(*b));
                let db = mul_elem(g, val(*a));
                vec![(*a, da), (*b, db)]
            }
            Op::AddRow(x, bias) => {
                let n = val(*bias).len();
                let mut db = vec![T::zero(); n];
                for (i, &v) in gd.iter().enumerate() {
                    db[i % n] = db[i % n] + v;
                }
                vec![
                    (*x, g.clone()),
                    (*bias, Tensor::from_parts(val(*bias).shape().to_vec(), db)),
                ]
            }
            Op::Scale(x, s) => vec![(*x, g.map(|v| v * *s))],
            Op::MulConst(x, c) => vec![(*x, mul_elem(g, c))],
            Op::Transpose(x) => vec![(*x, g.transpose2().expect("2-D"))],
            Op::Reshape(x) => vec![(
                *x,
                Tensor::from_parts(val(*x).shape().to_vec(), gd.to_vec()),
            )],
            Op::NarrowCols { x, start } => {
                let (r, c) = (val(*x).shape()[0], val(*x).shape()[1]);
                let len = g.shape()[1];
                let mut dx = vec![T::zero(); r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + len]
                        .copy_from_slice(&gd[i * len..(i + 1) * len]);
                }
                vec![(*x, Tensor::from_parts(vec![r, c], dx))]
            }
            Op::ConcatCols(xs) => {
                let (r, total) = (g.shape()[0], g.shape()[1]);
                let mut offset = 0;
                let mut out = Vec::with_capacity(xs.len());
                for &x in xs {
                    let w = val(x).shape()[1];
                    let mut dx = Vec::with_capacity(r * w);
                    for i in 0..r {
                        dx.extend_from_slice(&gd[i * total + offset..i * total + offset + w]);
                    }
                    offset += w;
                    out.push((x, Tensor::from_parts(vec![r, w], dx)));
                }
                out
            }
            Op::Conv1dK2S2 { x, w, b } => {
                let (cin, p) = (val(*x).shape()[0], val(*x).shape()[1]);
                let cout = val(*w).shape()[0];
                let half = p / 2;
                let (xd, wd) = (val(*x).data(), val(*w).data());
                let mut dx = vec![T::zero(); cin * p];
                let mut dw = vec![T::zero(); cout * cin * 2];
                let mut db = vec![T::zero(); cout];
                for j in 0..cout {
                    for t in 0..half {
                        let gv = gd[j * half + t];
                        db[j] = db[j] + gv;
                        for k in 0..cin {
                            let wi = (j * cin + k) * 2;
                            dx[k * p + 2 * t] = dx[k * p + 2 * t] + wd[wi] * gv;
                            dx[k * p + 2 * t + 1] = dx[k * p + 2 * t + 1] + wd[wi + 1] * gv;
                            dw[wi] = dw[wi] + gv * xd[k * p + 2 * t];
                            dw[wi + 1] = dw[wi + 1] + gv * xd[k * p + 2 * t + 1];
                        }
                    }
                }
                vec![
                    (*x, Tensor::from_parts(vec![cin, p], dx)),
                    (*w, Tensor::from_parts(vec![cout, cin, 2], dw)),
                    (*b, Tensor::from_parts(val(*b).shape().to_vec(), db)),
                ]
            }
            Op::ConvTranspose1dK2S2 { x, w, b } => {
                let (cin, p) = (val(*x).shape()[0], val(*x).shape()[1]);
                let cout = val(*w).shape()[1];
                let len = 2 * p;
                let (xd, wd) = (val(*x).data(), val(*w).data());
                let mut dx = vec![T::zero(); cin * p];
                let mut dw = vec![T::zero(); cin * cout * 2];
                let mut db = vec![T::zero(); cout];
                for j in 0..cout {
                    db[j] = gd[j * len..(j + 1) * len].iter().copied().sum();
                }
                for k in 0..cin {
                    for j in 0..cout {
                        let wi = (k * cout + j) * 2;
                        let (w0, w1) = (wd[wi], wd[wi + 1]);
                        let mut a0 = T::zero();
                        let mut a1 = T::zero();
                        for t in 0..p {
                            let g0 = gd[j * len + 2 * t];
                            let g1 = gd[j * len + 2 * t + 1];
                            dx[k * p + t] = dx[k * p + t] + w0 * g0 + w1 * g1;
                            a0 = a0 + xd[k * p + t] * g0;
                            a1 = a1 + xd[k * p + t] * g1;
                        }
                        dw[wi] = a0;
                        dw[wi + 1] = a1;
                    }
                }
                vec![
                    (*x, Tensor::from_parts(vec![cin, p], dx)),
                    (*w, Tensor::from_parts(vec![cin, cout, 2], dw)),
                    (*b, Tensor::from_parts(val(*b).shape().to_vec(), db)),
                ]
            }
            Op::Pointwise { x, w, b } => {
                let (cin, p) = (val(*x).shape()[0], val(*x).shape()[1]);
                let cout = val(*w).shape()[0];
                let (xd, wd) = (val(*x).data(), val(*w).data());
                let mut out = Vec::new();
                if wants(*x) {
                    // wᵀ · g
                    let mut dx = vec![T::zero(); cin * p];
                    for j in 0..cout {
                        for k in 0..cin {
                            let wv = wd[j * cin + k];
                            for t in 0..p {
                                dx[k * p + t] = dx[k * p + t] + wv * gd[j * p + t];
                            }
                        }
                    }
                    out.push((*x, Tensor::from_parts(vec![cin, p], dx)));
                }
                let mut dw = vec![T::zero(); cout * cin];
                let mut db = vec![T::zero(); cout];
                for j in 0..cout {
                    let gj = &gd[j * p..(j + 1) * p];
                    db[j] = gj.iter().copied().sum();
                    for k in 0..cin {
                        dw[j * cin + k] = gj
                            .iter()
                            .zip(&xd[k * p..(k + 1) * p])
                            .map(|(&a, &b)| a * b)
                            .sum();
                    }
                }
                out.push((*w, Tensor::from_parts(vec![cout, cin], dw)));
                out.push((*b, Tensor::from_parts(val(*b).shape().to_vec(), db)));
                out
            }
            Op::AdaptivePool { x } => {
                let (c, len_in) = (val(*x).shape()[0], val(*x).shape()[1]);
                let out_len = g.shape()[1];
                let mut dx = vec![T::zero(); c * len_in];
                for t in 0..out_len {
                    let (s, e) = pool_bin(t, len_in, out_len);
                    let inv = T::one() / T::of((e - s) as f64);
                    for ch in 0..c {
                        let gv = gd[ch * out_len + t] * inv;
                        for v in &mut dx[ch * len_in + s..ch * len_in + e] {
                            *v = *v + gv;
                        }
                    }
                }
                vec![(*x, Tensor::from_parts(vec![c, len_in], dx))]
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let n = node.value.last_dim();
                let mut dx = vec![T::zero(); y.len()];
                for ((yr, gr), dr) in y.chunks(n).zip(gd.chunks(n)).zip(dx.chunks_mut(n)) {
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                vec![(*x, Tensor::from_parts(node.value.shape().to_vec(), dx))]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = node.value.last_dim();
                let gn = val(*gain).data();
                let dn = T::of(d as f64);
                let mut dx = vec![T::zero(); gd.len()];
                let mut dgain = vec![T::zero(); d];
                let mut dbias = vec![T::zero(); d];
                for (r, (gr, hr)) in gd.chunks(d).zip(xhat.chunks(d)).enumerate() {
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..d {
                        dgain[j] = dgain[j] + gr[j] * hr[j];
                        dbias[j] = dbias[j] + gr[j];
                        let dh = gr[j] * gn[j];
                        m1 = m1 + dh;
                        m2 = m2 + dh * hr[j];
                    }
                    m1 = m1 / dn;
                    m2 = m2 / dn;
                    for j in 0..d {
                        let dh = gr[j] * gn[j];
                        dx[r * d + j] = rstd[r] * (dh - m1 - hr[j] * m2);
                    }
                }
                vec![
                    (*x, Tensor::from_parts(node.value.shape().to_vec(), dx)),
                    (
                        *gain,
                        Tensor::from_parts(val(*gain).shape().to_vec(), dgain),
                    ),
                    (
                        *bias,
                        Tensor::from_parts(val(*bias).shape().to_vec(), dbias),
                    ),
                ]
            }
            Op::Gelu(x) => {
                let xd = val(*x).data();
                let dx = xd
                    .iter()
                    .zip(gd)
                    .map(|(&v, &gv)| gv * gelu_parts(v).1)
                    .collect();
                vec![(*x, Tensor::from_parts(val(*x).shape().to_vec(), dx))]
            }
            Op::Square(x) => {
                let two = T::of(2.0);
                let dx = val(*x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&v, &gv)| two * v * gv)
                    .collect();
                vec![(*x, Tensor::from_parts(val(*x).shape().to_vec(), dx))]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(val(*x).shape().to_vec(), gd[0]))],
            Op::Mean(x) => {
                let n = T::of(val(*x).len() as f64);
                vec![(*x, Tensor::full(val(*x).shape().to_vec(), gd[0] / n))]
            }
        }
    }
}

fn mul_elem<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    }
    out
}
