//! Adam with per-prefix learning-rate multipliers. Parameters that are frozen
//! or received no gradient are left untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    /// First-moment decay.
    pub beta0: f64,
    /// Second-moment decay.
    pub beta1: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta0: 0.0,
            beta1: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr.is_finite() && self.lr >= 0.0, Config, "learning rate {} must be finite and >= 0", self.lr);
        ensure!((0.0..1.0).contains(&self.beta0), Config, "beta0 {} outside [0, 1)", self.beta0);
        ensure!((0.0..1.0).contains(&self.beta1), Config, "beta1 {} outside [0, 1)", self.beta1);
        ensure!(self.eps > 0.0, Config, "adam eps must be positive");
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    /// `(name prefix, multiplier)`; the first matching prefix wins.
    pub lr_multipliers: Vec<(String, f64)>,
    t: u64,
    moments: BTreeMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            lr_multipliers: Vec::new(),
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn with_multiplier(mut self, prefix: &str, factor: f64) -> Self {
        self.lr_multipliers.push((prefix.to_string(), factor));
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    fn lr_for(&self, name: &str) -> f64 {
        let m = self
            .lr_multipliers
            .iter()
            .find(|(p, _)| name.starts_with(p.as_str()))
            .map_or(1.0, |&(_, f)| f);
        self.config.lr * m
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.t += 1;
        let c = self.config.clone();
        let bc0 = 1.0 - c.beta0.powi(self.t as i32);
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let names: Vec<String> = store.names().map(String::from).collect();
        for name in names {
            let lr = self.lr_for(&name);
            let p = store.param_mut(&name).expect("listed name");
            let Some(grad) = p.grad.take() else { continue };
            if !p.trainable {
                continue;
            }
            let (m, v) = self
                .moments
                .entry(name)
                .or_insert_with(|| (Tensor::zeros(grad.shape().to_vec()), Tensor::zeros(grad.shape().to_vec())));
            let (b0, b1) = (T::lit(c.beta0), T::lit(c.beta1));
            let (one, eps) = (T::one(), T::lit(c.eps));
            let (bc0, bc1) = (T::lit(bc0), T::lit(bc1));
            let step = T::lit(lr);
            let upd = lr != 0.0;
            for (((w, &gr), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b0 * *mi + (one - b0) * gr;
                *vi = b1 * *vi + (one - b1) * gr * gr;
                if upd {
                    *w = *w - step * (*mi / bc0) / ((*vi / bc1).sqrt() + eps);
                }
            }
        }
    }
}
