//! Central finite-difference verification of graph gradients.
//!
//! Errors are reported per named input as
//! `max_i |analytic_i - numeric_i| / scale`, where `scale` is the larger of
//! that input's analytic/numeric infinity norms, floored at `1e-3` times the
//! largest scale across all inputs. The floor keeps inputs whose true
//! gradient is exactly zero (e.g. a key bias under softmax shift invariance)
//! from being judged on pure round-off.

use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};
use crate::Scalar;

const SCALE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<ParamError>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_err < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            let mark = if e.max_rel_err < self.tolerance {
                "ok  "
            } else {
                "FAIL"
            };
            writeln!(f, "{mark} {:<32} {:.3e}", e.name, e.max_rel_err)?;
        }
        write!(
            f,
            "tolerance {:.1e}, worst {:.3e}",
            self.tolerance,
            self.worst()
        )
    }
}

/// Default central-difference step: cube root of machine epsilon.
pub fn default_step<T: Scalar>() -> T {
    T::epsilon().cbrt()
}

/// Loss value and gradients w.r.t. every input, via [`Graph::backward`].
pub fn analytic_gradients<T, F>(f: &F, inputs: &[Tensor<T>]) -> Result<(T, Vec<Tensor<T>>)>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let value = g.value(loss).data()[0];
    Ok((value, vars.iter().map(|&v| grads.get(v)).collect()))
}

fn eval_loss<T, F>(f: &F, inputs: &[Tensor<T>]) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    Ok(g.value(loss).data()[0])
}

/// Central differences `(f(x + h) - f(x - h)) / 2h`, one element at a time.
pub fn numeric_gradients<T, F>(f: &F, inputs: &[Tensor<T>], step: T) -> Result<Vec<Tensor<T>>>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    let two_h = step + step;
    for i in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[i].shape().to_vec());
        for j in 0..inputs[i].len() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + step;
            let up = eval_loss(f, &work)?;
            work[i].data_mut()[j] = x0 - step;
            let down = eval_loss(f, &work)?;
            work[i].data_mut()[j] = x0;
            grad.data_mut()[j] = (up - down) / two_h;
        }
        out.push(grad);
    }
    Ok(out)
}

fn inf_norm<T: Scalar>(t: &Tensor<T>) -> f64 {
    t.data()
        .iter()
        .map(|v| v.as_f64().abs())
        .fold(0.0, f64::max)
}

pub fn compare_gradients<T: Scalar>(
    names: &[String],
    analytic: &[Tensor<T>],
    numeric: &[Tensor<T>],
    tolerance: f64,
) -> GradCheckReport {
    let scales: Vec<f64> = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| inf_norm(a).max(inf_norm(n)))
        .collect();
    let floor = (scales.iter().copied().fold(0.0, f64::max) * SCALE_FLOOR).max(f64::MIN_POSITIVE);
    let entries = names
        .iter()
        .zip(analytic.iter().zip(numeric))
        .zip(&scales)
        .map(|((name, (a, n)), &scale)| {
            let diff = a.max_abs_diff(n).as_f64();
            ParamError {
                name: name.clone(),
                max_rel_err: diff / scale.max(floor),
            }
        })
        .collect();
    GradCheckReport { entries, tolerance }
}

/// Runs `f` on the named inputs and compares analytic against numeric gradients.
pub fn finite_diff_check<T, F>(
    f: F,
    inputs: &[(String, Tensor<T>)],
    tolerance: f64,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let names: Vec<String> = inputs.iter().map(|(n, _)| n.clone()).collect();
    let values: Vec<Tensor<T>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let (_, analytic) = analytic_gradients(&f, &values)?;
    let numeric = numeric_gradients(&f, &values, default_step::<T>())?;
    Ok(compare_gradients(&names, &analytic, &numeric, tolerance))
}
