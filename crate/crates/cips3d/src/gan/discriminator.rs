//! Small convolutional discriminator: strided 3×3 convolutions with leaky
//! ReLU, global average pooling and a linear head producing one logit per image.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, ParamStore, Var};
use crate::error::{ensure, Result};
use crate::nn::{init_linear, linear, LEAKY_SLOPE};
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    /// Channels of the first convolution; each later layer doubles it.
    pub base_channels: usize,
    pub layers: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            base_channels: 32,
            layers: 3,
        }
    }
}

impl DiscriminatorConfig {
    pub fn aux_default() -> Self {
        DiscriminatorConfig {
            base_channels: 16,
            layers: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub prefix: String,
    pub config: DiscriminatorConfig,
}

impl Discriminator {
    pub fn new(prefix: &str, config: DiscriminatorConfig) -> Result<Self> {
        ensure!(
            config.base_channels > 0 && config.layers > 0,
            Config,
            "discriminator {prefix} needs positive channels and layers"
        );
        Ok(Discriminator {
            prefix: prefix.to_string(),
            config,
        })
    }

    pub fn channels(&self, layer: usize) -> usize {
        self.config.base_channels << layer
    }

    pub fn init<T: Scalar>(&self, rng: &mut impl Rng) -> ParamStore<T> {
        let mut store = ParamStore::new();
        let mut c_in = 3;
        for i in 0..self.config.layers {
            let c_out = self.channels(i);
            init_linear(&mut store, rng, &format!("{}.conv{i}", self.prefix), 9 * c_in, c_out);
            c_in = c_out;
        }
        init_linear(&mut store, rng, &format!("{}.head", self.prefix), c_in, 1);
        store
    }

    /// `images: [B, H, W, 3]` to logits `[B, 1]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, images: Var) -> Var {
        let mut h = images;
        for i in 0..self.config.layers {
            let pre = format!("{}.conv{i}", self.prefix);
            h = g.conv2d(h, p[&format!("{pre}.weight")], p[&format!("{pre}.bias")], 3, 2, 1);
            h = g.leaky_relu(h, LEAKY_SLOPE);
        }
        let pooled = g.mean_axes(h, &[1, 2], false);
        linear(g, p, &format!("{}.head", self.prefix), pooled)
    }
}
