//! Appearance network: nine blocks of two modulated fully connected layers
//! (ModFC) over a sequence of independent pixels, with a modulated tRGB head
//! after each block whose outputs are summed into the final colour.
//!
//! A ModFC layer modulates `W: [d_in, d_out]` per sample by a style
//! `S: [b, d_in]` (`W′ = W ⊗ S`), optionally demodulates each output column
//! (`W″ = W′ / sqrt(Σ_{d_in} W′² + ε)`), and applies `Y = X·W″ + bias` as a
//! single batched product.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, ParamStore, Var};
use crate::error::{ensure, Result};
use crate::nn::{uniform, MappingNetwork, LEAKY_SLOPE};
use crate::tensor::{self, Scalar, Tensor};

pub const INR_BLOCKS: usize = 9;
pub const LAYERS_PER_BLOCK: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InrConfig {
    pub dim_z: usize,
    pub dim_w: usize,
    pub mapping_layers: usize,
    pub width: usize,
    pub demod_eps: f64,
}

impl Default for InrConfig {
    fn default() -> Self {
        InrConfig {
            dim_z: 128,
            dim_w: 128,
            mapping_layers: 3,
            width: 64,
            demod_eps: 1e-8,
        }
    }
}

fn check_modfc_shapes<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, s: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    ensure!(x.rank() == 3, Shape, "X must be [b, n, d_in], got {:?}", x.shape());
    ensure!(w.rank() == 2, Shape, "W must be [d_in, d_out], got {:?}", w.shape());
    let (b, n, d_in) = (x.dim(0), x.dim(1), x.dim(2));
    let d_out = w.dim(1);
    ensure!(w.dim(0) == d_in, Shape, "W rows {} != d_in {d_in}", w.dim(0));
    ensure!(s.shape() == [b, d_in], Shape, "S must be [{b}, {d_in}], got {:?}", s.shape());
    ensure!(bias.shape() == [d_out], Shape, "bias must be [{d_out}], got {:?}", bias.shape());
    Ok((b, n, d_in, d_out))
}

/// Per-sample loop over the batch: materialise `W′_k`, demodulate it, then
/// multiply with plain loops.
pub fn modfc_reference<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    s: &Tensor<T>,
    bias: &Tensor<T>,
    demod: bool,
    eps: f64,
) -> Result<Tensor<T>> {
    let (b, n, d_in, d_out) = check_modfc_shapes(x, w, s, bias)?;
    let eps = T::lit(eps);
    let (xd, wd, sd, bd) = (x.data(), w.data(), s.data(), bias.data());
    let mut y = vec![T::zero(); b * n * d_out];
    let mut wk = vec![T::zero(); d_in * d_out];
    for k in 0..b {
        for i in 0..d_in {
            for o in 0..d_out {
                wk[i * d_out + o] = wd[i * d_out + o] * sd[k * d_in + i];
            }
        }
        if demod {
            for o in 0..d_out {
                let mut sq = T::zero();
                for i in 0..d_in {
                    sq = sq + wk[i * d_out + o] * wk[i * d_out + o];
                }
                let norm = (sq + eps).sqrt();
                for i in 0..d_in {
                    wk[i * d_out + o] = wk[i * d_out + o] / norm;
                }
            }
        }
        let xk = &xd[k * n * d_in..(k + 1) * n * d_in];
        let yk = &mut y[k * n * d_out..(k + 1) * n * d_out];
        for r in 0..n {
            let row = &mut yk[r * d_out..(r + 1) * d_out];
            for p in 0..d_in {
                let xv = xk[r * d_in + p];
                for (yv, &wv) in row.iter_mut().zip(&wk[p * d_out..(p + 1) * d_out]) {
                    *yv = *yv + xv * wv;
                }
            }
            for (yv, &bv) in row.iter_mut().zip(bd) {
                *yv = *yv + bv;
            }
        }
    }
    Ok(Tensor::new([b, n, d_out], y))
}

/// Broadcast Mod, column Demod and one batched matrix product.
pub fn modfc_efficient<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    s: &Tensor<T>,
    bias: &Tensor<T>,
    demod: bool,
    eps: f64,
) -> Result<Tensor<T>> {
    let (b, _, d_in, d_out) = check_modfc_shapes(x, w, s, bias)?;
    let w1 = w.clone().reshape([1, d_in, d_out]);
    let s1 = s.clone().reshape([b, d_in, 1]);
    let mut wm = tensor::binary_broadcast(&w1, &s1, |a, c| a * c);
    if demod {
        let sq = tensor::sum_axes(&wm.map(|v| v * v), &[1], true);
        let eps = T::lit(eps);
        let scale = sq.map(|v| (v + eps).sqrt().recip());
        wm = tensor::binary_broadcast(&wm, &scale, |a, c| a * c);
    }
    let y = tensor::bmm(x, &wm);
    Ok(tensor::binary_broadcast(&y, bias, |a, c| a + c))
}

/// Graph form of [`modfc_efficient`]: `x: [b, n, d_in]`, `w: [d_in, d_out]`, `s: [b, d_in]`.
pub fn modfc_graph<T: Scalar>(g: &mut Graph<T>, x: Var, w: Var, s: Var, bias: Var, demod: bool, eps: f64) -> Var {
    let (d_in, d_out) = (g.shape(w)[0], g.shape(w)[1]);
    let b = g.shape(s)[0];
    let w1 = g.reshape(w, &[1, d_in, d_out]);
    let s1 = g.reshape(s, &[b, d_in, 1]);
    let mut wm = g.mul(w1, s1);
    if demod {
        let sq = g.square(wm);
        let sum = g.sum_axes(sq, &[1], true);
        let sum = g.add_scalar(sum, eps);
        let norm = g.sqrt(sum);
        let inv = g.recip(norm);
        wm = g.mul(wm, inv);
    }
    let y = g.bmm(x, wm);
    g.add(y, bias)
}

/// One ModFC layer with its own style affine (`{prefix}.style.*`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModFc {
    pub prefix: String,
    pub d_in: usize,
    pub d_out: usize,
    pub demod: bool,
}

impl ModFc {
    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng, dim_w: usize) {
        let bound = (3.0 / self.d_in as f64).sqrt();
        store.insert(format!("{}.weight", self.prefix), uniform(rng, &[self.d_in, self.d_out], bound));
        store.insert(format!("{}.bias", self.prefix), Tensor::zeros([self.d_out]));
        // style starts at S = 1: an unmodulated layer
        store.insert(format!("{}.style.weight", self.prefix), Tensor::zeros([dim_w, self.d_in]));
        store.insert(format!("{}.style.bias", self.prefix), Tensor::ones([self.d_in]));
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, w_a: Var, eps: f64) -> Var {
        let pre = &self.prefix;
        let s = g.matmul(w_a, p[&format!("{pre}.style.weight")]);
        let s = g.add(s, p[&format!("{pre}.style.bias")]);
        modfc_graph(
            g,
            x,
            p[&format!("{pre}.weight")],
            s,
            p[&format!("{pre}.bias")],
            self.demod,
            eps,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InrNetwork {
    pub config: InrConfig,
    pub dim_in: usize,
    pub mapping: MappingNetwork,
    /// `blocks[i] = ([fc0, fc1], trgb)`
    pub blocks: Vec<([ModFc; LAYERS_PER_BLOCK], ModFc)>,
}

impl InrNetwork {
    pub fn new(config: InrConfig, dim_in: usize) -> Self {
        let mapping = MappingNetwork::new("map_a", config.dim_z, config.dim_w, config.mapping_layers);
        let width = config.width;
        let blocks = (0..INR_BLOCKS)
            .map(|i| {
                let fc = |j: usize, d_in| ModFc {
                    prefix: format!("inr.block{i}.fc{j}"),
                    d_in,
                    d_out: width,
                    demod: true,
                };
                let first_in = if i == 0 { dim_in } else { width };
                (
                    [fc(0, first_in), fc(1, width)],
                    ModFc {
                        prefix: format!("inr.block{i}.trgb"),
                        d_in: width,
                        d_out: 3,
                        demod: false,
                    },
                )
            })
            .collect();
        InrNetwork {
            config,
            dim_in,
            mapping,
            blocks,
        }
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        self.mapping.init(store, rng);
        for (fcs, trgb) in &self.blocks {
            for fc in fcs {
                fc.init(store, rng, self.config.dim_w);
            }
            trgb.init(store, rng, self.config.dim_w);
        }
    }

    /// `features: [B, n, dim_in]`, `w_a: [B, dim_w]` to RGB `[B, n, 3]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, features: Var, w_a: Var) -> Var {
        let eps = self.config.demod_eps;
        let gain = std::f64::consts::SQRT_2;
        let mut h = features;
        let mut rgb: Option<Var> = None;
        for (fcs, trgb) in &self.blocks {
            for fc in fcs {
                h = fc.forward(g, p, h, w_a, eps);
                h = g.leaky_relu(h, LEAKY_SLOPE);
                h = g.scale(h, gain);
            }
            let t = trgb.forward(g, p, h, w_a, eps);
            rgb = Some(match rgb {
                None => t,
                Some(acc) => g.add(acc, t),
            });
        }
        rgb.expect("at least one block")
    }

    /// Colours for a `[n, dim_in]` pixel sequence and one appearance latent.
    pub fn render<T: Scalar>(&self, store: &ParamStore<T>, features: &Tensor<T>, z_a: &[T]) -> Result<Tensor<T>> {
        ensure!(
            features.rank() >= 2 && *features.shape().last().unwrap() == self.dim_in,
            Shape,
            "feature map must end in {} channels, got {:?}",
            self.dim_in,
            features.shape()
        );
        ensure!(z_a.len() == self.config.dim_z, Shape, "appearance latent size {}", z_a.len());
        let n = features.numel() / self.dim_in;
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let z = g.constant(Tensor::new([1, z_a.len()], z_a.to_vec()));
        let w = self.mapping.forward(&mut g, &p, z);
        let x = g.constant(features.clone().reshape([1, n, self.dim_in]));
        let rgb = self.forward(&mut g, &p, x, w);
        let mut shape = features.shape().to_vec();
        *shape.last_mut().unwrap() = 3;
        Ok(g.value(rgb).clone().reshape(shape))
    }
}
