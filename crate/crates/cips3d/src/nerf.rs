//! Shape network: a learnable sine positional encoding followed by three
//! FiLM-modulated SIREN blocks, with density and feature heads. The field
//! depends on the 3D point and the shape style only, never on the viewing
//! direction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, ParamStore, Var};
use crate::camera::Vec3;
use crate::error::{ensure, Result};
use crate::nn::{init_linear, linear, uniform, MappingNetwork};
use crate::tensor::{Scalar, Tensor};

pub const SIREN_BLOCKS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NerfConfig {
    pub dim_z: usize,
    pub dim_w: usize,
    pub mapping_layers: usize,
    pub hidden: usize,
    pub dim_v: usize,
    /// Frequency factor of the encoding layer.
    pub omega0: f64,
}

impl Default for NerfConfig {
    fn default() -> Self {
        NerfConfig {
            dim_z: 128,
            dim_w: 128,
            mapping_layers: 3,
            hidden: 32,
            dim_v: 32,
            omega0: 30.0,
        }
    }
}

/// Density and feature at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub sigma: f64,
    pub feature: Vec<f64>,
}

/// `sin(γ ⊙ (x·W + b) + β)`; `gamma` and `beta` broadcast over the point axis.
pub fn film_siren_block<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    weight: Var,
    bias: Var,
) -> Var {
    let h = g.matmul(x, weight);
    let h = g.add(h, bias);
    let h = g.mul(h, gamma);
    let h = g.add(h, beta);
    g.sin(h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NerfNetwork {
    pub config: NerfConfig,
    pub mapping: MappingNetwork,
}

impl NerfNetwork {
    pub fn new(config: NerfConfig) -> Self {
        let mapping = MappingNetwork::new("map_s", config.dim_z, config.dim_w, config.mapping_layers);
        NerfNetwork { config, mapping }
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let c = &self.config;
        self.mapping.init(store, rng);
        let enc = 1.0 / 3.0;
        store.insert("nerf.encode.weight", uniform(rng, &[3, c.hidden], enc));
        store.insert("nerf.encode.bias", uniform(rng, &[c.hidden], enc));
        let hidden_bound = (6.0 / c.hidden as f64).sqrt();
        let style_bound = 0.25 / (c.dim_w as f64).sqrt();
        for i in 0..SIREN_BLOCKS {
            store.insert(format!("nerf.block{i}.weight"), uniform(rng, &[c.hidden, c.hidden], hidden_bound));
            store.insert(
                format!("nerf.block{i}.bias"),
                uniform(rng, &[c.hidden], 1.0 / (c.hidden as f64).sqrt()),
            );
            store.insert(format!("nerf.block{i}.gamma.weight"), uniform(rng, &[c.dim_w, c.hidden], style_bound));
            store.insert(format!("nerf.block{i}.gamma.bias"), Tensor::zeros([c.hidden]));
            store.insert(format!("nerf.block{i}.beta.weight"), Tensor::zeros([c.dim_w, c.hidden]));
            store.insert(format!("nerf.block{i}.beta.bias"), Tensor::zeros([c.hidden]));
        }
        init_linear(store, rng, "nerf.sigma", c.hidden, 1);
        init_linear(store, rng, "nerf.feature", c.hidden, c.dim_v);
        init_linear(store, rng, "nerf.to_rgb", c.dim_v, 3);
    }

    /// `points: [B, P, 3]`, `w_s: [B, dim_w]` to `(σ: [B, P, 1], v: [B, P, dim_v])`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, points: Var, w_s: Var) -> (Var, Var) {
        let c = &self.config;
        let b = g.shape(points)[0];
        let h = linear(g, p, "nerf.encode", points);
        let h = g.scale(h, c.omega0);
        let mut h = g.sin(h);
        for i in 0..SIREN_BLOCKS {
            let gamma = linear(g, p, &format!("nerf.block{i}.gamma"), w_s);
            let gamma = g.add_scalar(gamma, 1.0);
            let gamma = g.reshape(gamma, &[b, 1, c.hidden]);
            let beta = linear(g, p, &format!("nerf.block{i}.beta"), w_s);
            let beta = g.reshape(beta, &[b, 1, c.hidden]);
            h = film_siren_block(
                g,
                h,
                gamma,
                beta,
                p[&format!("nerf.block{i}.weight")],
                p[&format!("nerf.block{i}.bias")],
            );
        }
        let sigma = linear(g, p, "nerf.sigma", h);
        let sigma = g.softplus(sigma);
        let feature = linear(g, p, "nerf.feature", h);
        (sigma, feature)
    }

    /// Per-pixel affine map from composited features to RGB.
    pub fn to_rgb<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, features: Var) -> Var {
        linear(g, p, "nerf.to_rgb", features)
    }

    /// Evaluates the field at `points` for one shape latent.
    pub fn query<T: Scalar>(&self, store: &ParamStore<T>, points: &[Vec3], z_s: &[T]) -> Result<Vec<FieldSample>> {
        ensure!(
            points.iter().flatten().all(|v| v.is_finite()),
            NonFinite,
            "point coordinates must be finite"
        );
        ensure!(!points.is_empty(), Contract, "no points to query");
        ensure!(
            z_s.len() == self.config.dim_z,
            Shape,
            "shape latent has {} entries, expected {}",
            z_s.len(),
            self.config.dim_z
        );
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let z = g.constant(Tensor::new([1, self.config.dim_z], z_s.to_vec()));
        let w = self.mapping.forward(&mut g, &p, z);
        let pts = g.constant(Tensor::new(
            [1, points.len(), 3],
            points.iter().flatten().map(|&v| T::lit(v)).collect(),
        ));
        let (sigma, feature) = self.forward(&mut g, &p, pts, w);
        let dv = self.config.dim_v;
        let sig = g.value(sigma).data();
        let feat = g.value(feature).data();
        Ok((0..points.len())
            .map(|i| FieldSample {
                sigma: sig[i].as_f64(),
                feature: feat[i * dv..(i + 1) * dv].iter().map(|v| v.as_f64()).collect(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> (NerfNetwork, ParamStore<f64>) {
        let net = NerfNetwork::new(NerfConfig {
            dim_z: 4,
            dim_w: 5,
            hidden: 6,
            dim_v: 3,
            ..NerfConfig::default()
        });
        let mut store = ParamStore::new();
        net.init(&mut store, &mut ChaCha8Rng::seed_from_u64(11));
        (net, store)
    }

    fn block(x: &[f64], gamma: &[f64], beta: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let mut g = Graph::<f64>::new();
        let n = x.len() / 2;
        let xv = g.constant(Tensor::from_f64([n, 2], x));
        let gv = g.constant(Tensor::from_f64([2], gamma));
        let bv = g.constant(Tensor::from_f64([2], beta));
        let wv = g.constant(Tensor::from_f64([2, 2], w));
        let biasv = g.constant(Tensor::from_f64([2], b));
        let y = film_siren_block(&mut g, xv, gv, bv, wv, biasv);
        g.value(y).data().to_vec()
    }

    #[test]
    fn film_identity_is_plain_siren() {
        let x = [0.3, -0.7, 1.1, 0.2];
        let w = [0.5, -1.0, 2.0, 0.25];
        let b = [0.1, -0.2];
        let y = block(&x, &[1.0, 1.0], &[0.0, 0.0], &w, &b);
        for r in 0..2 {
            for c in 0..2 {
                let pre = x[r * 2] * w[c] + x[r * 2 + 1] * w[2 + c] + b[c];
                assert!((y[r * 2 + c] - pre.sin()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_gamma_gives_constant_sin_beta() {
        let y = block(&[0.3, -0.7, 5.0, 2.0], &[0.0, 0.0], &[0.4, -1.3], &[1.0, 2.0, 3.0, 4.0], &[0.5, 0.5]);
        assert_eq!(y, vec![0.4f64.sin(), (-1.3f64).sin(), 0.4f64.sin(), (-1.3f64).sin()]);
    }

    #[test]
    fn block_output_in_unit_range() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) * 3.7).collect();
        let y = block(&x, &[9.0, -4.0], &[2.0, 100.0], &[3.0, -2.0, 7.0, 1.5], &[0.0, 1.0]);
        assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn density_is_nonnegative_and_shapes_hold() {
        let (net, store) = small();
        let pts: Vec<Vec3> = (0..50)
            .map(|i| {
                let t = i as f64;
                [(t * 0.3).sin() * 3.0, (t * 0.7).cos() * 5.0, t * 0.1 - 2.0]
            })
            .collect();
        let s = net.query(&store, &pts, &[0.3, -1.0, 0.2, 2.0]).unwrap();
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|f| f.sigma >= 0.0 && f.feature.len() == 3));
    }

    #[test]
    fn rejects_non_finite_points() {
        let (net, store) = small();
        assert!(net.query(&store, &[[0.0, f64::NAN, 0.0]], &[0.0; 4]).is_err());
    }

    #[test]
    fn block_count_is_three() {
        let (_, store) = small();
        let blocks = store
            .names()
            .filter(|n| n.starts_with("nerf.block") && n.ends_with(".weight") && !n.contains("gamma") && !n.contains("beta"))
            .count();
        assert_eq!(blocks, SIREN_BLOCKS);
    }
}
