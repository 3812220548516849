//! Small building blocks shared by the generator and the discriminators.

use rand::Rng;

use crate::autodiff::{Bound, Graph, ParamStore, Var};
use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn uniform<T: Scalar>(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::lit(rng.random_range(-bound..=bound)))
}

/// `x · W + b` with parameters `{prefix}.weight` `[in, out]` and `{prefix}.bias` `[out]`.
pub fn linear<T: Scalar>(g: &mut Graph<T>, p: &Bound, prefix: &str, x: Var) -> Var {
    let y = g.matmul(x, p[&format!("{prefix}.weight")]);
    g.add(y, p[&format!("{prefix}.bias")])
}

/// Registers a linear layer initialised uniformly in `±1/√fan_in`.
pub fn init_linear<T: Scalar>(store: &mut ParamStore<T>, rng: &mut impl Rng, prefix: &str, fan_in: usize, fan_out: usize) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.insert(format!("{prefix}.weight"), uniform(rng, &[fan_in, fan_out], bound));
    store.insert(format!("{prefix}.bias"), uniform(rng, &[fan_out], bound));
}

/// Latent-to-style MLP: `layers` linear maps with leaky ReLU (slope 0.2)
/// between them and none after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingNetwork {
    pub prefix: String,
    pub dim_z: usize,
    pub dim_w: usize,
    pub layers: usize,
}

impl MappingNetwork {
    pub fn new(prefix: &str, dim_z: usize, dim_w: usize, layers: usize) -> Self {
        assert!(layers >= 1, "mapping network needs a layer");
        MappingNetwork {
            prefix: prefix.to_string(),
            dim_z,
            dim_w,
            layers,
        }
    }

    fn layer_name(&self, i: usize) -> String {
        format!("{}.fc{i}", self.prefix)
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        for i in 0..self.layers {
            let fan_in = if i == 0 { self.dim_z } else { self.dim_w };
            init_linear(store, rng, &self.layer_name(i), fan_in, self.dim_w);
        }
    }

    /// `z: [B, dim_z]` to `w: [B, dim_w]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, z: Var) -> Var {
        let mut h = z;
        for i in 0..self.layers {
            h = linear(g, p, &self.layer_name(i), h);
            if i + 1 < self.layers {
                h = g.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        h
    }

    /// Maps a single latent vector outside any training graph.
    pub fn map<T: Scalar>(&self, store: &ParamStore<T>, z: &[T]) -> Result<Vec<T>> {
        ensure!(
            z.len() == self.dim_z,
            Shape,
            "latent has {} entries, mapping network expects {}",
            z.len(),
            self.dim_z
        );
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let zv = g.constant(Tensor::new([1, self.dim_z], z.to_vec()));
        let w = self.forward(&mut g, &p, zv);
        Ok(g.value(w).data().to_vec())
    }
}
