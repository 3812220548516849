//! One adversarial training step and the resolution schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamStore};
use crate::camera::{sample_camera, AngleDistribution, DepthSampler};
use crate::error::{ensure, Error, Result};
use crate::generator::{sample_latents, Generator, GeneratorInput};
use crate::tensor::{Scalar, Tensor};

use super::{
    discriminator_loss, generator_loss, r1_penalty, Adam, AdamConfig, Discriminator, DiscriminatorConfig,
    ToyConfig, ToyDataset,
};

/// A resolution stage starting at `start_step`. `n_r: None` tracks every ray.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub start_step: u64,
    pub resolution: usize,
    pub n_r: Option<usize>,
}

impl Stage {
    pub fn rays_with_grad(&self) -> usize {
        self.n_r.unwrap_or(self.resolution * self.resolution)
    }
}

/// The stage of the last threshold `<= step` (the first stage before any threshold).
pub fn progressive_schedule(step: u64, schedule: &[Stage]) -> Stage {
    assert!(!schedule.is_empty(), "empty resolution schedule");
    schedule
        .iter()
        .take_while(|s| s.start_step <= step)
        .last()
        .copied()
        .unwrap_or(schedule[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub schedule: Vec<Stage>,
    pub batch_size: usize,
    pub lr_g: f64,
    /// Learning rate of both mapping networks.
    pub lr_mapping: f64,
    pub lr_d: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub adam_eps: f64,
    pub r1_gamma: f64,
    /// R1 is evaluated every this many steps and scaled by it.
    pub r1_interval: u64,
    pub aux_weight: f64,
    pub discriminator: DiscriminatorConfig,
    pub aux_discriminator: DiscriminatorConfig,
    pub pitch: AngleDistribution,
    pub yaw: AngleDistribution,
    pub dataset: ToyConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: vec![
                Stage {
                    start_step: 0,
                    resolution: 16,
                    n_r: None,
                },
                Stage {
                    start_step: 2000,
                    resolution: 32,
                    n_r: Some(24 * 24),
                },
            ],
            batch_size: 8,
            lr_g: 2e-4,
            lr_mapping: 2e-5,
            lr_d: 2e-4,
            beta0: 0.0,
            beta1: 0.999,
            adam_eps: 1e-8,
            r1_gamma: 10.0,
            r1_interval: 16,
            aux_weight: 1.0,
            discriminator: DiscriminatorConfig::default(),
            aux_discriminator: DiscriminatorConfig::aux_default(),
            pitch: AngleDistribution::default_pitch(),
            yaw: AngleDistribution::default_yaw(),
            dataset: ToyConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.schedule.is_empty(), Config, "resolution schedule is empty");
        ensure!(self.schedule[0].start_step == 0, Config, "the first stage must start at step 0");
        for w in self.schedule.windows(2) {
            ensure!(
                w[0].start_step < w[1].start_step,
                Config,
                "schedule thresholds must ascend: {} then {}",
                w[0].start_step,
                w[1].start_step
            );
        }
        for s in &self.schedule {
            let hw = s.resolution * s.resolution;
            ensure!(s.resolution > 0, Config, "stage at step {} has zero resolution", s.start_step);
            ensure!(
                s.rays_with_grad() <= hw,
                Config,
                "n_r = {} exceeds the {hw} pixels of the {}² stage at step {}",
                s.rays_with_grad(),
                s.resolution,
                s.start_step
            );
        }
        ensure!(self.batch_size > 0, Config, "batch_size must be positive");
        for (name, v) in [
            ("lr_g", self.lr_g),
            ("lr_mapping", self.lr_mapping),
            ("lr_d", self.lr_d),
            ("r1_gamma", self.r1_gamma),
            ("aux_weight", self.aux_weight),
        ] {
            ensure!(v.is_finite() && v >= 0.0, Config, "{name} = {v} must be finite and >= 0");
        }
        ensure!(self.r1_interval > 0, Config, "r1_interval must be positive");
        ensure!(
            self.aux_discriminator.base_channels < self.discriminator.base_channels,
            Config,
            "the auxiliary discriminator must have fewer channels than the main one"
        );
        self.adam(self.lr_g).validate()?;
        self.pitch.validate()?;
        self.yaw.validate()?;
        self.dataset.validate()
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta0: self.beta0,
            beta1: self.beta1,
            eps: self.adam_eps,
        }
    }
}

/// Losses of one step. `r1` is the unscaled penalty of the most recent step
/// that evaluated it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub loss_d_aux: f64,
    pub loss_g_aux: f64,
    pub r1: f64,
}

impl StepLosses {
    pub fn all_finite(&self) -> bool {
        [self.loss_d, self.loss_g, self.loss_d_aux, self.loss_g_aux, self.r1]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub config: TrainConfig,
    pub generator: Generator,
    pub g_params: ParamStore<T>,
    pub d: Discriminator,
    pub d_params: ParamStore<T>,
    pub d_aux: Discriminator,
    pub d_aux_params: ParamStore<T>,
    pub adam_g: Adam<T>,
    pub adam_d: Adam<T>,
    pub adam_d_aux: Adam<T>,
    pub step: u64,
    pub last_r1: f64,
}

/// Generator of the step's randomness: stream `step + 1` of the run seed.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step + 1);
    rng
}

impl<T: Scalar> TrainState<T> {
    /// Fresh networks initialised from stream 0 of the run seed.
    pub fn new(generator: Generator, config: TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let g_params = generator.init(&mut rng);
        Self::with_generator_params(generator, g_params, config)
    }

    /// Starts from existing generator weights (keeping their trainable flags).
    pub fn with_generator_params(generator: Generator, g_params: ParamStore<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        generator.check_params(&g_params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(u64::MAX);
        let d = Discriminator::new("d", config.discriminator.clone())?;
        let d_aux = Discriminator::new("d_aux", config.aux_discriminator.clone())?;
        let d_params = d.init(&mut rng);
        let d_aux_params = d_aux.init(&mut rng);
        let adam_g = Adam::new(config.adam(config.lr_g))
            .with_multiplier("map_s.", config.lr_mapping / config.lr_g.max(f64::MIN_POSITIVE))
            .with_multiplier("map_a.", config.lr_mapping / config.lr_g.max(f64::MIN_POSITIVE));
        let adam_d = Adam::new(config.adam(config.lr_d));
        let adam_d_aux = Adam::new(config.adam(config.lr_d));
        Ok(TrainState {
            config,
            generator,
            g_params,
            d,
            d_params,
            d_aux,
            d_aux_params,
            adam_g,
            adam_d,
            adam_d_aux,
            step: 0,
            last_r1: 0.0,
        })
    }

    pub fn stage(&self) -> Stage {
        progressive_schedule(self.step, &self.config.schedule)
    }

    pub fn dataset(&self) -> ToyDataset {
        let gc = &self.generator.config;
        ToyDataset {
            config: self.config.dataset.clone(),
            pitch: self.config.pitch.clone(),
            yaw: self.config.yaw.clone(),
            fov: gc.fov,
            near: gc.near,
            far: gc.far,
        }
    }

    /// Samples the real batch for the current step and trains on it.
    pub fn train_step_auto(&mut self) -> Result<StepLosses> {
        let mut rng = step_rng(self.config.seed, self.step);
        let res = self.stage().resolution;
        let real = self.dataset().sample_batch::<T>(&mut rng, self.config.batch_size, res)?;
        self.train_step(&real, &mut rng)
    }

    /// One discriminator update, one auxiliary-discriminator update and one
    /// generator update on `real: [B, H, W, 3]`.
    pub fn train_step(&mut self, real: &Tensor<T>, rng: &mut impl Rng) -> Result<StepLosses> {
        let stage = self.stage();
        let res = stage.resolution;
        ensure!(
            real.rank() == 4 && real.shape()[1..] == [res, res, 3],
            Shape,
            "real batch must be [B, {res}, {res}, 3] at step {}, got {:?}",
            self.step,
            real.shape()
        );
        let b = real.dim(0);
        let gc = self.generator.config.clone();
        let poses = (0..b)
            .map(|_| sample_camera(rng, &self.config.pitch, &self.config.yaw, gc.fov, gc.near, gc.far))
            .collect::<Result<Vec<_>>>()?;
        let input = GeneratorInput {
            z_s: sample_latents(rng, b, gc.nerf.dim_z),
            z_a: sample_latents(rng, b, gc.inr.dim_z),
            poses,
            samplers: (0..b).map(|_| DepthSampler::jittered_from(rng)).collect(),
        };

        let mut g = Graph::new();
        let gp = self.g_params.bind(&mut g, true);
        let out = self.generator.forward(&mut g, &gp, &input, res, res, stage.rays_with_grad(), rng)?;
        let fake = g.value(out.image).clone();
        let aux_fake = g.value(out.aux_image).clone();

        let with_r1 = self.step % self.config.r1_interval == 0;
        let lazy = self.config.r1_interval as f64;
        let (loss_d, r1) = self.update_discriminator(false, real, &fake, with_r1, lazy)?;
        let (loss_d_aux, _) = self.update_discriminator(true, real, &aux_fake, with_r1, lazy)?;
        if let Some(r) = r1 {
            self.last_r1 = r;
        }

        let dp = self.d_params.bind(&mut g, false);
        let logits = self.d.forward(&mut g, &dp, out.image);
        let loss_g = generator_loss(&mut g, logits);
        let ap = self.d_aux_params.bind(&mut g, false);
        let aux_logits = self.d_aux.forward(&mut g, &ap, out.aux_image);
        let loss_g_aux = generator_loss(&mut g, aux_logits);
        let weighted = g.scale(loss_g_aux, self.config.aux_weight);
        let total = g.add(loss_g, weighted);
        let losses = StepLosses {
            step: self.step,
            loss_d,
            loss_g: g.value(loss_g).item().as_f64(),
            loss_d_aux,
            loss_g_aux: g.value(loss_g_aux).item().as_f64(),
            r1: self.last_r1,
        };
        if !losses.all_finite() {
            return Err(Error::NonFinite(format!("non-finite loss at step {}: {losses:?}", self.step)));
        }
        self.g_params.backward(&mut g, &gp, total)?;
        self.adam_g.step(&mut self.g_params);
        self.step += 1;
        Ok(losses)
    }

    fn update_discriminator(
        &mut self,
        aux: bool,
        real: &Tensor<T>,
        fake: &Tensor<T>,
        with_r1: bool,
        lazy: f64,
    ) -> Result<(f64, Option<f64>)> {
        let (d, params, adam) = if aux {
            (&self.d_aux, &mut self.d_aux_params, &mut self.adam_d_aux)
        } else {
            (&self.d, &mut self.d_params, &mut self.adam_d)
        };
        let mut g = Graph::new();
        let p = params.bind(&mut g, true);
        let real_v = g.leaf(real.clone(), with_r1);
        let fake_v = g.constant(fake.clone());
        let real_logits = d.forward(&mut g, &p, real_v);
        let fake_logits = d.forward(&mut g, &p, fake_v);
        let loss = discriminator_loss(&mut g, real_logits, fake_logits);
        let loss_value = g.value(loss).item().as_f64();
        let (total, r1) = if with_r1 {
            let r1 = r1_penalty(&mut g, d, &p, real_v, self.config.r1_gamma);
            let r1_value = g.value(r1).item().as_f64();
            let scaled = g.scale(r1, lazy);
            (g.add(loss, scaled), Some(r1_value))
        } else {
            (loss, None)
        };
        let step = self.step;
        let which = if aux { "auxiliary " } else { "" };
        if !loss_value.is_finite() || r1.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "non-finite {which}discriminator loss at step {step}: loss {loss_value}, r1 {r1:?}"
            )));
        }
        params.backward(&mut g, &p, total)?;
        adam.step(params);
        Ok((loss_value, r1))
    }
}
