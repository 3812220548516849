use std::collections::BTreeMap;
use std::ops::Index;

use super::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// A named trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub trainable: bool,
}

/// Ordered collection of named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
}

/// Graph vars for the parameters of a store, bound onto one tape.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl Index<&str> for Bound {
    type Output = Var;

    fn index(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} is not bound"))
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.params.insert(
            name.into(),
            Param {
                value,
                grad: None,
                trainable: true,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.get_mut(name)
    }

    /// Panics on unknown names.
    pub fn value(&self, name: &str) -> &Tensor<T> {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor<T> {
        &mut self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .value
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Sets the trainable flag on every parameter whose name passes `select`.
    pub fn set_trainable(&mut self, select: impl Fn(&str) -> bool, trainable: bool) {
        for (name, p) in self.params.iter_mut() {
            if select(name) {
                p.trainable = trainable;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    pub fn num_elements(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    /// Puts every parameter on the tape. With `track`, trainable parameters
    /// become differentiation targets; otherwise all are constants.
    pub fn bind(&self, g: &mut Graph<T>, track: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| (name.clone(), g.leaf(p.value.clone(), track && p.trainable)))
            .collect();
        Bound { vars }
    }

    /// Adds the gradients in `grads` into each parameter's accumulator.
    pub fn accumulate(&mut self, bound: &Bound, grads: &Gradients<T>) {
        for (name, var) in bound.iter() {
            let Some(gr) = grads.get(var) else { continue };
            let p = self.params.get_mut(name).expect("bound name exists");
            match &mut p.grad {
                Some(acc) => acc.add_assign(gr),
                None => p.grad = Some(gr.clone()),
            }
        }
    }

    /// Runs backward from `loss`, accumulates into the store and returns the
    /// per-name gradients of this call.
    pub fn backward(
        &mut self,
        g: &mut Graph<T>,
        bound: &Bound,
        loss: Var,
    ) -> Result<BTreeMap<String, Tensor<T>>> {
        let grads = g.backward(loss)?;
        self.accumulate(bound, &grads);
        Ok(bound
            .iter()
            .filter_map(|(name, v)| grads.get(v).map(|t| (name.to_string(), t.clone())))
            .collect())
    }

    /// Checks that both stores hold the same names with the same shapes.
    pub fn check_compatible(&self, other: &ParamStore<T>) -> Result<()> {
        for (name, p) in &self.params {
            match other.params.get(name) {
                None => return Err(Error::Shape(format!("parameter {name} missing"))),
                Some(q) if q.value.shape() != p.value.shape() => {
                    return Err(Error::Shape(format!(
                        "parameter {name}: {:?} vs {:?}",
                        p.value.shape(),
                        q.value.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = other.params.keys().find(|k| !self.params.contains_key(*k)) {
            return Err(Error::Shape(format!("parameter {extra} missing")));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            grad: p.grad.as_ref().map(Tensor::cast),
                            trainable: p.trainable,
                        },
                    )
                })
                .collect(),
        }
    }
}
