use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Real, Tensor};

/// Named, shaped parameter buffer.
#[derive(Debug, Clone)]
pub struct Param<R> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<R>,
}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Normal with the given std, resampled outside ±2 std.
    TruncNormal(f64),
    Zeros,
    Const(f64),
}

/// Owns every trainable value of a model. Forward passes read it through a
/// [`Bound`] snapshot, so the store itself is shareable across threads.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<R> {
    params: Vec<Param<R>>,
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut impl Rng) -> ParamId {
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![R::zero(); n],
            Init::Const(v) => vec![R::from_f64_lossy(v); n],
            Init::TruncNormal(std) => {
                let normal = Normal::new(0.0, std).expect("valid std");
                (0..n)
                    .map(|_| loop {
                        let v: f64 = normal.sample(rng);
                        if v.abs() <= 2.0 * std {
                            break R::from_f64_lossy(v);
                        }
                    })
                    .collect()
            }
        };
        self.params.push(Param { name: name.to_string(), shape: shape.to_vec(), data });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param<R> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<R> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<R>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<R>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Snapshot of every parameter as a leaf tensor.
    pub fn bind(&self, requires_grad: bool) -> Bound<R> {
        let leaves = self
            .params
            .iter()
            .map(|p| {
                if requires_grad {
                    Tensor::param(p.data.clone(), &p.shape)
                } else {
                    Tensor::new(p.data.clone(), &p.shape)
                }
            })
            .collect();
        Bound { leaves }
    }

    /// Copies values from a store with identical names and shapes but a
    /// possibly different element type.
    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| S::from_f64_lossy(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Leaf tensors for one forward pass.
pub struct Bound<R: Real> {
    leaves: Vec<Tensor<R>>,
}

impl<R: Real> Bound<R> {
    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.leaves[id.0]
    }

    /// Accumulated gradients in store order; parameters not reached by
    /// backward get zeros.
    pub fn grads(&self) -> Vec<Vec<R>> {
        self.leaves
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![R::zero(); t.numel()]))
            .collect()
    }
}
