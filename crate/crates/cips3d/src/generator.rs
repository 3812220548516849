//! The full generator: shape network, feature volume rendering, then the
//! per-pixel appearance network. Also renders the shape branch's own RGB
//! (its `to_rgb` projection) for the auxiliary discriminator.
//!
//! Training forward passes track gradients for only `n_r` sampled rays per
//! image; the other rays are evaluated on the same tape with tracking off and
//! scattered into the same image.

use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, ParamStore, Var};
use crate::camera::{generate_rays, CameraPose, DepthSampler, RayBatch};
use crate::error::{ensure, Result};
use crate::inr::{InrConfig, InrNetwork};
use crate::nerf::{NerfConfig, NerfNetwork};
use crate::render::{ray_inputs, render_features};
use crate::tensor::{self, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub nerf: NerfConfig,
    pub inr: InrConfig,
    /// Depth samples per ray.
    pub n_samples: usize,
    /// Vertical field of view in radians.
    pub fov: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            nerf: NerfConfig::default(),
            inr: InrConfig::default(),
            n_samples: 12,
            fov: 12f64.to_radians(),
            near: 0.88,
            far: 1.12,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.nerf;
        let i = &self.inr;
        ensure!(
            n.dim_z > 0 && n.dim_w > 0 && n.hidden > 0 && n.dim_v > 0 && n.mapping_layers > 0,
            Config,
            "shape network sizes must be positive"
        );
        ensure!(
            i.dim_z > 0 && i.dim_w > 0 && i.width > 0 && i.mapping_layers > 0,
            Config,
            "appearance network sizes must be positive"
        );
        ensure!(i.demod_eps > 0.0, Config, "demod epsilon must be positive");
        ensure!(n.omega0.is_finite() && n.omega0 > 0.0, Config, "omega0 must be positive");
        ensure!(self.n_samples > 0, Config, "n_samples must be positive");
        ensure!(
            self.fov > 0.0 && self.fov < std::f64::consts::PI,
            Config,
            "fov {} outside (0, π)",
            self.fov
        );
        ensure!(
            0.0 < self.near && self.near < self.far,
            Config,
            "need 0 < near < far, got {} and {}",
            self.near,
            self.far
        );
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub nerf: NerfNetwork,
    pub inr: InrNetwork,
}

/// Per-image inputs of a generator batch.
#[derive(Clone, Debug)]
pub struct GeneratorInput<T> {
    /// `[B, dim_z]` shape latents.
    pub z_s: Tensor<T>,
    /// `[B, dim_z]` appearance latents.
    pub z_a: Tensor<T>,
    pub poses: Vec<CameraPose>,
    pub samplers: Vec<DepthSampler>,
}

impl<T: Scalar> GeneratorInput<T> {
    pub fn batch(&self) -> usize {
        self.poses.len()
    }
}

/// Result of a training forward pass.
#[derive(Clone, Debug)]
pub struct GeneratorOutput {
    /// `[B, H, W, 3]`
    pub image: Var,
    /// Shape-branch RGB, `[B, H, W, 3]`.
    pub aux_image: Var,
    /// `B·H·W` flags, row-major per image; true where gradients are tracked.
    pub grad_mask: Vec<bool>,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let nerf = NerfNetwork::new(config.nerf.clone());
        let inr = InrNetwork::new(config.inr.clone(), config.nerf.dim_v);
        Ok(Generator { config, nerf, inr })
    }

    pub fn init<T: Scalar>(&self, rng: &mut impl Rng) -> ParamStore<T> {
        let mut store = ParamStore::new();
        self.nerf.init(&mut store, rng);
        self.inr.init(&mut store, rng);
        store
    }

    /// Checks that `store` holds exactly this generator's tensors.
    pub fn check_params<T: Scalar>(&self, store: &ParamStore<T>) -> Result<()> {
        let reference: ParamStore<T> = self.init(&mut ChaCha8Rng::seed_from_u64(0));
        reference.check_compatible(store)
    }

    /// Both colour branches for rays given as points `[B, R·S, 3]` and deltas `[B, R, S]`.
    pub fn forward_rays<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        w_s: Var,
        w_a: Var,
        points: Var,
        deltas: Var,
    ) -> (Var, Var) {
        let feat = render_features(g, &self.nerf, p, w_s, points, deltas);
        let aux = self.nerf.to_rgb(g, p, feat);
        let rgb = self.inr.forward(g, p, feat, w_a);
        (rgb, aux)
    }

    fn ray_tensors<T: Scalar>(
        &self,
        rays: &[RayBatch],
        samplers: &[DepthSampler],
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut pts = Vec::with_capacity(rays.len());
        let mut deltas = Vec::with_capacity(rays.len());
        for (r, &s) in rays.iter().zip(samplers) {
            let (p, d) = ray_inputs::<T>(r, self.config.n_samples, s)?;
            pts.push(p);
            deltas.push(d);
        }
        let pts: Vec<&Tensor<T>> = pts.iter().collect();
        let deltas: Vec<&Tensor<T>> = deltas.iter().collect();
        Ok((tensor::concat(&pts, 0), tensor::concat(&deltas, 0)))
    }

    fn styles<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, input: &GeneratorInput<T>) -> Result<(Var, Var)> {
        let b = input.batch();
        ensure!(b > 0, Contract, "empty generator batch");
        ensure!(input.samplers.len() == b, Shape, "{} samplers for {b} poses", input.samplers.len());
        ensure!(
            input.z_s.shape() == [b, self.config.nerf.dim_z],
            Shape,
            "z_s must be [{b}, {}], got {:?}",
            self.config.nerf.dim_z,
            input.z_s.shape()
        );
        ensure!(
            input.z_a.shape() == [b, self.config.inr.dim_z],
            Shape,
            "z_a must be [{b}, {}], got {:?}",
            self.config.inr.dim_z,
            input.z_a.shape()
        );
        let z_s = g.constant(input.z_s.clone());
        let z_a = g.constant(input.z_a.clone());
        let w_s = self.nerf.mapping.forward(g, p, z_s);
        let w_a = self.inr.mapping.forward(g, p, z_a);
        Ok((w_s, w_a))
    }

    /// Training forward pass with partial gradients: `n_r` pixels per image,
    /// drawn uniformly without replacement, are tracked.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        input: &GeneratorInput<T>,
        height: usize,
        width: usize,
        n_r: usize,
        rng: &mut impl Rng,
    ) -> Result<GeneratorOutput> {
        let hw = height * width;
        ensure!(n_r <= hw, Contract, "n_r = {n_r} exceeds the {hw} pixels of a {height}×{width} image");
        let (w_s, w_a) = self.styles(g, p, input)?;
        let b = input.batch();
        let mut tracked_rays = Vec::with_capacity(b);
        let mut rest_rays = Vec::with_capacity(b);
        let mut tracked_idx = Vec::with_capacity(b * n_r);
        let mut rest_idx = Vec::with_capacity(b * (hw - n_r));
        let mut grad_mask = vec![false; b * hw];
        for (k, pose) in input.poses.iter().enumerate() {
            let rays = generate_rays(pose, height, width)?;
            let mut picked = index::sample(rng, hw, n_r).into_vec();
            picked.sort_unstable();
            let mut rest = Vec::with_capacity(hw - n_r);
            let mut it = picked.iter().peekable();
            for i in 0..hw {
                if it.peek() == Some(&&i) {
                    it.next();
                    grad_mask[k * hw + i] = true;
                } else {
                    rest.push(i);
                }
            }
            tracked_rays.push(rays.select(&picked));
            rest_rays.push(rays.select(&rest));
            tracked_idx.extend_from_slice(&picked);
            rest_idx.extend_from_slice(&rest);
        }

        // Each part is scattered to full size, or is a zero constant when
        // empty, and the two are always joined by one add, so the recorded
        // graph has the same structure for every n_r > 0.
        let zero = |g: &mut Graph<T>| g.constant(Tensor::zeros([b, hw, 3]));
        let (tracked_rgb, tracked_aux) = if n_r > 0 {
            let (pts, deltas) = self.ray_tensors::<T>(&tracked_rays, &input.samplers)?;
            let pts = g.constant(pts);
            let deltas = g.constant(deltas);
            let (rgb, a) = self.forward_rays(g, p, w_s, w_a, pts, deltas);
            let idx: Arc<[usize]> = tracked_idx.into();
            (g.scatter_rows(rgb, idx.clone(), hw), g.scatter_rows(a, idx, hw))
        } else {
            (zero(g), zero(g))
        };
        let (rest_rgb, rest_aux) = if n_r < hw {
            let (pts, deltas) = self.ray_tensors::<T>(&rest_rays, &input.samplers)?;
            g.no_grad(|g| {
                let pts = g.constant(pts);
                let deltas = g.constant(deltas);
                let (rgb, a) = self.forward_rays(g, p, w_s, w_a, pts, deltas);
                let idx: Arc<[usize]> = rest_idx.into();
                (g.scatter_rows(rgb, idx.clone(), hw), g.scatter_rows(a, idx, hw))
            })
        } else {
            (zero(g), zero(g))
        };
        let image = g.add(tracked_rgb, rest_rgb);
        let aux = g.add(tracked_aux, rest_aux);
        let shape = [b, height, width, 3];
        let image = g.reshape(image, &shape);
        let aux_image = g.reshape(aux, &shape);
        Ok(GeneratorOutput {
            image,
            aux_image,
            grad_mask,
        })
    }

    /// Forward pass with every ray tracked and no gather/scatter; the
    /// reference for the partial-gradient path. Returns `(image, aux)`.
    pub fn forward_full<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        input: &GeneratorInput<T>,
        height: usize,
        width: usize,
    ) -> Result<(Var, Var)> {
        let (w_s, w_a) = self.styles(g, p, input)?;
        let rays = input
            .poses
            .iter()
            .map(|pose| generate_rays(pose, height, width))
            .collect::<Result<Vec<_>>>()?;
        let (pts, deltas) = self.ray_tensors::<T>(&rays, &input.samplers)?;
        let pts = g.constant(pts);
        let deltas = g.constant(deltas);
        let (rgb, aux) = self.forward_rays(g, p, w_s, w_a, pts, deltas);
        let shape = [input.batch(), height, width, 3];
        Ok((g.reshape(rgb, &shape), g.reshape(aux, &shape)))
    }

    /// Untracked colours `[R, 3]` (INR and shape branch) for any set of rays of one image.
    pub fn render_rays<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        z_s: &[T],
        z_a: &[T],
        rays: &RayBatch,
        sampler: DepthSampler,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        ensure!(!rays.is_empty(), Contract, "empty ray batch");
        ensure!(z_s.len() == self.config.nerf.dim_z, Shape, "shape latent size {}", z_s.len());
        ensure!(z_a.len() == self.config.inr.dim_z, Shape, "appearance latent size {}", z_a.len());
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let p = store.bind(&mut g, false);
        let z_sv = g.constant(Tensor::new([1, z_s.len()], z_s.to_vec()));
        let z_av = g.constant(Tensor::new([1, z_a.len()], z_a.to_vec()));
        let w_s = self.nerf.mapping.forward(&mut g, &p, z_sv);
        let w_a = self.inr.mapping.forward(&mut g, &p, z_av);
        let (pts, deltas) = self.ray_tensors::<T>(std::slice::from_ref(rays), &[sampler])?;
        let pts = g.constant(pts);
        let deltas = g.constant(deltas);
        let (rgb, aux) = self.forward_rays(&mut g, &p, w_s, w_a, pts, deltas);
        let n = rays.len();
        Ok((g.value(rgb).clone().reshape([n, 3]), g.value(aux).clone().reshape([n, 3])))
    }

    /// Renders a full `[H, W, 3]` image and its shape-branch companion,
    /// evaluating the pixels in `chunks` contiguous groups.
    #[allow(clippy::too_many_arguments)]
    pub fn render_chunked<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        z_s: &[T],
        z_a: &[T],
        pose: &CameraPose,
        height: usize,
        width: usize,
        sampler: DepthSampler,
        chunks: usize,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let hw = height * width;
        ensure!(chunks >= 1 && chunks <= hw, Contract, "{chunks} chunks for {hw} pixels");
        let rays = generate_rays(pose, height, width)?;
        let mut rgb = Vec::with_capacity(chunks);
        let mut aux = Vec::with_capacity(chunks);
        for c in 0..chunks {
            let (lo, hi) = (c * hw / chunks, (c + 1) * hw / chunks);
            let rows: Vec<usize> = (lo..hi).collect();
            let (r, a) = self.render_rays(store, z_s, z_a, &rays.select(&rows), sampler)?;
            rgb.push(r);
            aux.push(a);
        }
        let rgb: Vec<&Tensor<T>> = rgb.iter().collect();
        let aux: Vec<&Tensor<T>> = aux.iter().collect();
        Ok((
            tensor::concat(&rgb, 0).reshape([height, width, 3]),
            tensor::concat(&aux, 0).reshape([height, width, 3]),
        ))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn render<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        z_s: &[T],
        z_a: &[T],
        pose: &CameraPose,
        height: usize,
        width: usize,
        sampler: DepthSampler,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        self.render_chunked(store, z_s, z_a, pose, height, width, sampler, 1)
    }

    /// Camera pose at the generator's field of view and depth bounds.
    pub fn pose(&self, pitch: f64, yaw: f64) -> Result<CameraPose> {
        CameraPose::new(pitch, yaw, self.config.fov, self.config.near, self.config.far)
    }
}

/// Standard-normal latents `[B, dim]`.
pub fn sample_latents<T: Scalar>(rng: &mut impl Rng, batch: usize, dim: usize) -> Tensor<T> {
    use rand_distr::{Distribution, StandardNormal};
    Tensor::from_fn([batch, dim], |_| {
        let v: f64 = StandardNormal.sample(rng);
        T::lit(v)
    })
}
