//! Cameras on the unit sphere looking at the origin, pinhole ray casting and
//! stratified depth sampling.
//!
//! Spherical convention: up is `+y`, pitch is measured from `+y`, and
//! `origin = (sin(pitch)·cos(yaw), cos(pitch), sin(pitch)·sin(yaw))`.
//! Pitch `π/2`, yaw `π/2` puts the camera at `(0, 0, 1)` looking down `−z`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub type Vec3 = [f64; 3];

/// Pitch is kept this far from the poles so the look-at frame stays defined.
pub const POLE_MARGIN: f64 = 1e-6;

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

pub(crate) fn axpy(o: Vec3, t: f64, d: Vec3) -> Vec3 {
    [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]
}

/// A bounded scalar distribution for pose angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AngleDistribution {
    Fixed { value: f64 },
    Uniform { min: f64, max: f64 },
    /// Normal draw clamped into `[min, max]`.
    Normal { mean: f64, std: f64, min: f64, max: f64 },
}

impl AngleDistribution {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            AngleDistribution::Fixed { value } => value,
            AngleDistribution::Uniform { min, max } => min + (max - min) * rng.random::<f64>(),
            AngleDistribution::Normal { mean, std, min, max } => {
                let v = Normal::new(mean, std).map_or(mean, |n| n.sample(rng));
                v.clamp(min, max)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AngleDistribution::Fixed { value } => {
                ensure!(value.is_finite(), Contract, "fixed angle must be finite")
            }
            AngleDistribution::Uniform { min, max } => {
                ensure!(min.is_finite() && max.is_finite() && min <= max, Contract, "uniform bounds {min}..{max}")
            }
            AngleDistribution::Normal { mean, std, min, max } => {
                ensure!(
                    mean.is_finite() && std >= 0.0 && min.is_finite() && max.is_finite() && min <= max,
                    Contract,
                    "normal(mean {mean}, std {std}) clamped to {min}..{max}"
                )
            }
        }
        Ok(())
    }

    /// Pitch default for face-like data: N(π/2, 0.155) clamped to (0.3, π−0.3).
    pub fn default_pitch() -> Self {
        AngleDistribution::Normal {
            mean: PI / 2.0,
            std: 0.155,
            min: 0.3,
            max: PI - 0.3,
        }
    }

    /// Yaw default: N(π/2, 0.3) clamped to four standard deviations.
    pub fn default_yaw() -> Self {
        AngleDistribution::Normal {
            mean: PI / 2.0,
            std: 0.3,
            min: PI / 2.0 - 1.2,
            max: PI / 2.0 + 1.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraPose {
    pub origin: Vec3,
    pub pitch: f64,
    pub yaw: f64,
    /// Vertical field of view in radians.
    pub fov: f64,
    pub near: f64,
    pub far: f64,
}

impl CameraPose {
    /// Builds the pose for `(pitch, yaw)`; pitch is clamped away from the poles.
    pub fn new(pitch: f64, yaw: f64, fov: f64, near: f64, far: f64) -> Result<Self> {
        ensure!(fov > 0.0 && fov < PI, Contract, "fov {fov} outside (0, π)");
        ensure!(0.0 < near && near < far, Contract, "need 0 < near < far, got {near}, {far}");
        ensure!(pitch.is_finite() && yaw.is_finite(), Contract, "non-finite pose angles");
        let pitch = pitch.clamp(POLE_MARGIN, PI - POLE_MARGIN);
        let origin = [pitch.sin() * yaw.cos(), pitch.cos(), pitch.sin() * yaw.sin()];
        Ok(CameraPose {
            origin,
            pitch,
            yaw,
            fov,
            near,
            far,
        })
    }

    pub fn forward(&self) -> Vec3 {
        normalize([-self.origin[0], -self.origin[1], -self.origin[2]])
    }

    /// `(right, up, forward)` camera frame with world up `+y`.
    pub fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let f = self.forward();
        let right = normalize(cross(f, [0.0, 1.0, 0.0]));
        let up = cross(right, f);
        (right, up, f)
    }
}

/// Draws a pose on the unit sphere from the pitch and yaw distributions.
pub fn sample_camera(
    rng: &mut impl Rng,
    pitch: &AngleDistribution,
    yaw: &AngleDistribution,
    fov: f64,
    near: f64,
    far: f64,
) -> Result<CameraPose> {
    pitch.validate()?;
    yaw.validate()?;
    let p = pitch.sample(rng);
    let y = yaw.sample(rng);
    CameraPose::new(p, y, fov, near, far)
}

/// One ray per pixel, row-major from the top-left pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct RayBatch {
    pub height: usize,
    pub width: usize,
    pub origins: Vec<Vec3>,
    pub directions: Vec<Vec3>,
    pub near: Vec<f64>,
    pub far: Vec<f64>,
    /// Row-major index of each ray's pixel in the full image.
    pub pixel_ids: Vec<usize>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Sub-batch of the given rays (positions within this batch), keeping pixel ids.
    pub fn select(&self, rows: &[usize]) -> RayBatch {
        RayBatch {
            height: self.height,
            width: self.width,
            origins: rows.iter().map(|&r| self.origins[r]).collect(),
            directions: rows.iter().map(|&r| self.directions[r]).collect(),
            near: rows.iter().map(|&r| self.near[r]).collect(),
            far: rows.iter().map(|&r| self.far[r]).collect(),
            pixel_ids: rows.iter().map(|&r| self.pixel_ids[r]).collect(),
        }
    }
}

/// Pinhole rays through pixel centres.
pub fn generate_rays(pose: &CameraPose, height: usize, width: usize) -> Result<RayBatch> {
    ensure!(height >= 1 && width >= 1, Contract, "image must be at least 1×1");
    let (right, up, fwd) = pose.frame();
    let half = (pose.fov / 2.0).tan();
    let aspect = width as f64 / height as f64;
    let n = height * width;
    let mut directions = Vec::with_capacity(n);
    for i in 0..height {
        let y = (1.0 - 2.0 * (i as f64 + 0.5) / height as f64) * half;
        for j in 0..width {
            let x = (2.0 * (j as f64 + 0.5) / width as f64 - 1.0) * half * aspect;
            directions.push(normalize([
                fwd[0] + x * right[0] + y * up[0],
                fwd[1] + x * right[1] + y * up[1],
                fwd[2] + x * right[2] + y * up[2],
            ]));
        }
    }
    Ok(RayBatch {
        height,
        width,
        origins: vec![pose.origin; n],
        directions,
        near: vec![pose.near; n],
        far: vec![pose.far; n],
        pixel_ids: (0..n).collect(),
    })
}

/// How depths are placed inside each of the equal bins along a ray.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthSampler {
    /// Bin centres; deterministic.
    Midpoint,
    /// Uniform jitter within each bin. Ray `p` draws from stream `p` of the
    /// seeded generator, so any subset of rays reproduces the full batch.
    Jittered { seed: u64 },
}

impl DepthSampler {
    pub fn jittered_from(rng: &mut impl Rng) -> Self {
        DepthSampler::Jittered { seed: rng.random() }
    }
}

/// Ordered depths and 3D points along every ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub n_samples: usize,
    /// `rays × n_samples`, row per ray.
    pub depths: Vec<f64>,
    pub points: Vec<Vec3>,
}

impl RaySamples {
    pub fn ray_depths(&self, ray: usize) -> &[f64] {
        &self.depths[ray * self.n_samples..(ray + 1) * self.n_samples]
    }

    /// Interval lengths; the last sample's interval runs to the far bound.
    pub fn deltas(&self, rays: &RayBatch) -> Vec<f64> {
        let s = self.n_samples;
        let mut out = Vec::with_capacity(self.depths.len());
        for r in 0..rays.len() {
            let d = self.ray_depths(r);
            for i in 0..s {
                out.push(if i + 1 < s { d[i + 1] - d[i] } else { rays.far[r] - d[i] });
            }
        }
        out
    }
}

pub fn stratify_points(rays: &RayBatch, n_samples: usize, sampler: DepthSampler) -> Result<RaySamples> {
    ensure!(n_samples >= 1, Contract, "n_samples must be at least 1");
    let mut depths = Vec::with_capacity(rays.len() * n_samples);
    let mut points = Vec::with_capacity(rays.len() * n_samples);
    for r in 0..rays.len() {
        let (tn, tf) = (rays.near[r], rays.far[r]);
        let bin = (tf - tn) / n_samples as f64;
        let mut rng = match sampler {
            DepthSampler::Midpoint => None,
            DepthSampler::Jittered { seed } => {
                let mut g = ChaCha8Rng::seed_from_u64(seed);
                g.set_stream(rays.pixel_ids[r] as u64);
                Some(g)
            }
        };
        for i in 0..n_samples {
            let u = rng.as_mut().map_or(0.5, |g| g.random::<f64>());
            let t = tn + (i as f64 + u) * bin;
            depths.push(t);
            points.push(axpy(rays.origins[r], t, rays.directions[r]));
        }
    }
    Ok(RaySamples {
        n_samples,
        depths,
        points,
    })
}
