use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Graph, Tensor, Var};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub tensor: Tensor<T>,
    pub frozen: bool,
}

/// Named learnable tensors in insertion order. The order is the checkpoint
/// payload order, so it must be deterministic for a given config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T> {
    params: IndexMap<String, Param<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Usage(format!("duplicate parameter name {name}")));
        }
        self.params.insert(
            name,
            Param {
                tensor,
                frozen: false,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.get_mut(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| Error::Usage(format!("no parameter named {name}")))
    }

    pub fn set(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Usage(format!("no parameter named {name}")))?;
        if p.tensor.shape() != tensor.shape() {
            return Err(Error::dim(
                "set_param",
                format!("{name}: {:?} vs {:?}", p.tensor.shape(), tensor.shape()),
            ));
        }
        p.tensor = tensor;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<T>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param<T>)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.tensor.len()).sum()
    }

    /// Sets the frozen flag on every parameter matching `pred`.
    pub fn set_frozen(&mut self, frozen: bool, pred: impl Fn(&str) -> bool) {
        for (name, p) in self.params.iter_mut() {
            if pred(name) {
                p.frozen = frozen;
            }
        }
    }

    /// Adds every parameter to `g`: trainable ones as gradient leaves, frozen
    /// ones as constants.
    pub fn bind(&self, g: &mut Graph<T>) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| {
                let v = if p.frozen {
                    g.constant(p.tensor.clone())
                } else {
                    g.param(p.tensor.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Binding { vars }
    }

    /// Adds every parameter to `g` as a constant.
    pub fn bind_constant(&self, g: &mut Graph<T>) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| (name.clone(), g.constant(p.tensor.clone())))
            .collect();
        Binding { vars }
    }

    /// SHA-256 over little-endian f32 bytes of the parameters selected by `pred`, in store order.
    pub fn digest(&self, pred: impl Fn(&str) -> bool) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.params {
            if !pred(name) {
                continue;
            }
            h.update(name.as_bytes());
            for v in p.tensor.data() {
                h.update((v.as_f64() as f32).to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|(n, p)| {
                    (
                        n.clone(),
                        Param {
                            tensor: p.tensor.cast(),
                            frozen: p.frozen,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Parameter name → graph handle for one forward pass.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: IndexMap<String, Var>,
}

impl Binding {
    /// Binding from explicit `(name, var)` pairs, e.g. inputs of a gradient check.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Binding {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Usage(format!("parameter {name} is not bound")))
    }

    /// Gradients for every bound parameter that received one.
    pub fn gradients<T: Scalar>(&self, grads: &Gradients<T>) -> IndexMap<String, Tensor<T>> {
        self.vars
            .iter()
            .filter_map(|(n, &v)| grads.wrt(v).map(|t| (n.clone(), t.clone())))
            .collect()
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

pub fn normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("std is positive");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}
