//! Procedural toy data: shaded spheres with a coloured marker dot, seen from
//! random cameras on the unit sphere. The marker sits off the mirror plane,
//! so the images are not symmetric under a yaw flip. Pixels are in `[-1, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{dot, generate_rays, normalize, sample_camera, AngleDistribution, CameraPose, Vec3};
use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub radius_min: f64,
    pub radius_max: f64,
    /// Sphere centres are offset uniformly within `±max_offset` per axis.
    pub max_offset: f64,
    /// Angular radius of the marker dot, radians.
    pub marker_radius: f64,
    pub marker_direction: Vec3,
    pub marker_color: Vec3,
    pub light_direction: Vec3,
    pub ambient: f64,
    /// Background intensity in `[0, 1]`.
    pub background: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            radius_min: 0.06,
            radius_max: 0.09,
            max_offset: 0.01,
            marker_radius: 0.35,
            marker_direction: [0.45, 0.35, 0.82],
            marker_color: [0.95, 0.2, 0.1],
            light_direction: [-0.3, 0.6, 0.75],
            ambient: 0.25,
            background: 0.08,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            0.0 < self.radius_min && self.radius_min <= self.radius_max,
            Config,
            "sphere radii {}..{} invalid",
            self.radius_min,
            self.radius_max
        );
        ensure!(self.max_offset >= 0.0, Config, "max_offset must be >= 0");
        ensure!(
            dot(self.marker_direction, self.marker_direction) > 0.0 && dot(self.light_direction, self.light_direction) > 0.0,
            Config,
            "marker and light directions must be non-zero"
        );
        Ok(())
    }
}

/// One sampled scene.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyScene {
    pub center: Vec3,
    pub radius: f64,
    pub albedo: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub config: ToyConfig,
    pub pitch: AngleDistribution,
    pub yaw: AngleDistribution,
    pub fov: f64,
    pub near: f64,
    pub far: f64,
}

impl ToyDataset {
    pub fn sample_scene(&self, rng: &mut impl Rng) -> ToyScene {
        let c = &self.config;
        let mut off = || c.max_offset * (2.0 * rng.random::<f64>() - 1.0);
        let center = [off(), off(), off()];
        let radius = c.radius_min + (c.radius_max - c.radius_min) * rng.random::<f64>();
        let albedo = [0.0; 3].map(|_: f64| 0.3 + 0.6 * rng.random::<f64>());
        ToyScene { center, radius, albedo }
    }

    /// Renders `scene` from `pose` as `[H, W, 3]` in `[-1, 1]`.
    pub fn render<T: Scalar>(&self, scene: &ToyScene, pose: &CameraPose, size: usize) -> Result<Tensor<T>> {
        let c = &self.config;
        let rays = generate_rays(pose, size, size)?;
        let light = normalize(c.light_direction);
        let marker = normalize(c.marker_direction);
        let cos_marker = c.marker_radius.cos();
        let mut data = Vec::with_capacity(size * size * 3);
        for (o, d) in rays.origins.iter().zip(&rays.directions) {
            let oc = [o[0] - scene.center[0], o[1] - scene.center[1], o[2] - scene.center[2]];
            let b = dot(oc, *d);
            let disc = b * b - (dot(oc, oc) - scene.radius * scene.radius);
            let rgb = if disc >= 0.0 {
                let t = -b - disc.sqrt();
                let n = normalize([oc[0] + t * d[0], oc[1] + t * d[1], oc[2] + t * d[2]]);
                let shade = c.ambient + (1.0 - c.ambient) * dot(n, light).max(0.0);
                let base = if dot(n, marker) >= cos_marker { c.marker_color } else { scene.albedo };
                base.map(|a| a * shade)
            } else {
                [c.background; 3]
            };
            data.extend(rgb.iter().map(|&v| T::lit(2.0 * v - 1.0)));
        }
        Ok(Tensor::new([size, size, 3], data))
    }

    /// A batch `[B, size, size, 3]` of fresh scenes and cameras.
    pub fn sample_batch<T: Scalar>(&self, rng: &mut impl Rng, batch: usize, size: usize) -> Result<Tensor<T>> {
        ensure!(batch > 0 && size > 0, Contract, "batch and size must be positive");
        let mut images = Vec::with_capacity(batch);
        for _ in 0..batch {
            let scene = self.sample_scene(rng);
            let pose = sample_camera(rng, &self.pitch, &self.yaw, self.fov, self.near, self.far)?;
            images.push(self.render::<T>(&scene, &pose, size)?);
        }
        let refs: Vec<&Tensor<T>> = images.iter().collect();
        let stacked = crate::tensor::concat(&refs, 0);
        Ok(stacked.reshape([batch, size, size, 3]))
    }
}
