//! Named trainable arrays and their per-step binding onto a tape.

use std::collections::HashMap;

use crate::nn::tape::{Gradients, Tape, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Ordered collection of uniquely named trainable arrays.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), index: HashMap::new() }
    }

    /// Registers a new array. Panics when `name` is already taken.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name:?}");
        let (r, c) = value.shape();
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, value, grad: Tensor::zeros(r, c) });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Total number of scalar entries.
    pub fn size(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Squared L2 norm of all values.
    pub fn norm_squared(&self) -> T {
        self.params.iter().map(|p| p.value.sum_squares()).sum()
    }

    /// Places every parameter on `tape` as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Binding<'t, T> {
        Binding { vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect() }
    }

    /// Adds the gradients of the bound leaves into `grad`.
    pub fn accumulate(&mut self, binding: &Binding<'_, T>, grads: &Gradients<T>) {
        for (p, &v) in self.params.iter_mut().zip(&binding.vars) {
            if let Some(g) = grads.wrt(v) {
                p.grad.add_assign(g);
            }
        }
    }

    /// Copies values (not gradients) from `other`, matching by name.
    pub fn copy_values_from(&mut self, other: &ParamSet<T>) {
        for p in &mut self.params {
            if let Some(&i) = other.index.get(&p.name) {
                p.value = other.params[i].value.clone();
            }
        }
    }
}

/// Parameters placed on one tape, addressable by [`ParamId`].
pub struct Binding<'t, T> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> Binding<'t, T> {
    #[inline]
    pub fn get(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }
}
