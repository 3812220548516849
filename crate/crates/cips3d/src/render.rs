//! Alpha-compositing quadrature of the feature volume-rendering integral.
//!
//! For samples `t_1 < … < t_n` with `δ_i = t_{i+1} − t_i` (the last interval
//! runs to the far bound), `T_1 = 1`, `T_{i+1} = T_i·exp(−σ_i·δ_i)`,
//! `w_i = T_i·(1 − exp(−σ_i·δ_i))` and the ray feature is `Σ w_i·v_i`.
//! Leftover transmittance maps to a zero feature.

use crate::autodiff::{Bound, Graph, ParamStore, Var};
use crate::camera::{stratify_points, DepthSampler, RayBatch};
use crate::error::{ensure, Result};
use crate::nerf::NerfNetwork;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeWeights {
    pub weights: Vec<f64>,
    pub transmittance: Vec<f64>,
}

/// Composites one ray. `features` is `n × dim_v`, row per sample.
pub fn composite(
    sigmas: &[f64],
    features: &[f64],
    depths: &[f64],
    far: f64,
) -> Result<(Vec<f64>, CompositeWeights)> {
    let n = sigmas.len();
    ensure!(n >= 1, Contract, "composite needs at least one sample");
    ensure!(depths.len() == n, Shape, "{} depths for {n} densities", depths.len());
    ensure!(features.len() % n == 0, Shape, "feature length {} not a multiple of {n}", features.len());
    ensure!(
        depths.windows(2).all(|w| w[0] < w[1]),
        Contract,
        "depths must be strictly increasing"
    );
    ensure!(far >= depths[n - 1], Contract, "far bound {far} precedes the last sample");
    ensure!(sigmas.iter().all(|&s| s >= 0.0), Contract, "densities must be non-negative");
    let dim = features.len() / n;
    let mut out = vec![0.0; dim];
    let mut weights = Vec::with_capacity(n);
    let mut transmittance = Vec::with_capacity(n);
    let mut t = 1.0;
    for i in 0..n {
        let delta = if i + 1 < n { depths[i + 1] - depths[i] } else { far - depths[i] };
        let decay = (-sigmas[i] * delta).exp();
        let w = t * (1.0 - decay);
        for (o, v) in out.iter_mut().zip(&features[i * dim..(i + 1) * dim]) {
            *o += w * v;
        }
        weights.push(w);
        transmittance.push(t);
        t *= decay;
    }
    Ok((out, CompositeWeights { weights, transmittance }))
}

/// Graph form over many rays at once.
///
/// `sigma: [B, R, S]`, `features: [B, R, S, D]`, `deltas: [B, R, S]` (constant).
/// Returns the composited features `[B, R, D]` and the weights `[B, R, S]`.
pub fn composite_graph<T: Scalar>(g: &mut Graph<T>, sigma: Var, features: Var, deltas: Var) -> (Var, Var) {
    let shape = g.shape(sigma).to_vec();
    let s = shape[2];
    // exclusive prefix sum along samples as a product with a strictly upper-triangular ones matrix
    let tri = Tensor::from_fn([s, s], |k| if k / s < k % s { T::one() } else { T::zero() });
    let tri = g.constant(tri);
    let optical = g.mul(sigma, deltas);
    let before = g.matmul(optical, tri);
    let neg_before = g.neg(before);
    let trans = g.exp(neg_before);
    let neg_optical = g.neg(optical);
    let decay = g.exp(neg_optical);
    let neg_decay = g.neg(decay);
    let alpha = g.add_scalar(neg_decay, 1.0);
    let weights = g.mul(trans, alpha);
    let w4 = g.reshape(weights, &[shape[0], shape[1], s, 1]);
    let weighted = g.mul(w4, features);
    let out = g.sum_axes(weighted, &[2], false);
    (out, weights)
}

/// Point tensor `[1, R·S, 3]` and delta tensor `[1, R, S]` for a ray batch.
pub(crate) fn ray_inputs<T: Scalar>(rays: &RayBatch, n_samples: usize, sampler: DepthSampler) -> Result<(Tensor<T>, Tensor<T>)> {
    let samples = stratify_points(rays, n_samples, sampler)?;
    let pts = Tensor::new(
        [1, rays.len() * n_samples, 3],
        samples.points.iter().flatten().map(|&v| T::lit(v)).collect(),
    );
    let deltas = Tensor::new(
        [1, rays.len(), n_samples],
        samples.deltas(rays).into_iter().map(T::lit).collect(),
    );
    Ok((pts, deltas))
}

/// Renders the composited feature of every ray in `rays`.
pub fn render_features<T: Scalar>(
    g: &mut Graph<T>,
    nerf: &NerfNetwork,
    p: &Bound,
    w_s: Var,
    points: Var,
    deltas: Var,
) -> Var {
    let d = g.shape(deltas).to_vec();
    let (sigma, feature) = nerf.forward(g, p, points, w_s);
    let sigma = g.reshape(sigma, &d);
    let dv = nerf.config.dim_v;
    let feature = g.reshape(feature, &[d[0], d[1], d[2], dv]);
    composite_graph(g, sigma, feature, deltas).0
}

/// Feature map `[H, W, dim_v]` for one shape latent; the rays may be any
/// subset of the image (output rows follow `rays`).
pub fn render_feature_map<T: Scalar>(
    nerf: &NerfNetwork,
    store: &ParamStore<T>,
    rays: &RayBatch,
    z_s: &[T],
    n_samples: usize,
    sampler: DepthSampler,
) -> Result<Tensor<T>> {
    ensure!(z_s.len() == nerf.config.dim_z, Shape, "shape latent size {}", z_s.len());
    ensure!(!rays.is_empty(), Contract, "empty ray batch");
    let (pts, deltas) = ray_inputs::<T>(rays, n_samples, sampler)?;
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let z = g.constant(Tensor::new([1, z_s.len()], z_s.to_vec()));
    let w = nerf.mapping.forward(&mut g, &p, z);
    let pts = g.constant(pts);
    let deltas = g.constant(deltas);
    let f = render_features(&mut g, nerf, &p, w, pts, deltas);
    let out = g.value(f).clone();
    let dv = nerf.config.dim_v;
    Ok(if rays.len() == rays.height * rays.width {
        out.reshape([rays.height, rays.width, dv])
    } else {
        out.reshape([rays.len(), dv])
    })
}
