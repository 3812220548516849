//! Training run driver: owns the run directory.
//!
//! ```text
//! <out>/config.json        resolved configuration snapshot
//! <out>/losses.csv         step,loss_d,loss_g,loss_d_aux,loss_g_aux,r1
//! <out>/checkpoints/       generator_step{N}.ckpt, generator.ckpt,
//!                          discriminator.ckpt, discriminator_aux.ckpt
//! <out>/samples/           step{N}.ppm and step{N}_nerf.ppm grids
//! <out>/nan_dump.txt       written only when a loss turns non-finite
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::ParamStore;
use crate::camera::{sample_camera, DepthSampler};
use crate::checkpoint::{self, write_atomic};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gan::{StepLosses, TrainState};
use crate::generator::{sample_latents, Generator};
use crate::image::{image_grid, tensor_to_image, write_ppm};
use crate::surgery::freeze_nerf;

pub const CSV_HEADER: &str = "step,loss_d,loss_g,loss_d_aux,loss_g_aux,r1";

pub fn csv_row(l: &StepLosses) -> String {
    format!(
        "{},{},{},{},{},{}",
        l.step, l.loss_d, l.loss_g, l.loss_d_aux, l.loss_g_aux, l.r1
    )
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub losses: Vec<StepLosses>,
    pub generator_checkpoint: PathBuf,
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Builds the training state, loading and optionally freezing initial weights.
pub fn build_state(config: &RunConfig) -> Result<TrainState<f32>> {
    config.validate()?;
    let generator = Generator::new(config.generator.clone())?;
    let mut state = match &config.init_checkpoint {
        Some(path) => {
            let params: ParamStore<f32> = checkpoint::load(path)?;
            TrainState::with_generator_params(generator, params, config.train.clone())?
        }
        None => TrainState::new(generator, config.train.clone())?,
    };
    if config.freeze_nerf {
        freeze_nerf(&mut state.g_params)?;
    }
    Ok(state)
}

/// Fixed latents and poses for sample grids, independent of the training stream.
fn write_samples(state: &TrainState<f32>, config: &RunConfig, dir: &Path, tag: &str) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    rng.set_stream(u64::MAX - 1);
    let gc = &state.generator.config;
    let res = state.stage().resolution;
    let n = config.sample_count;
    let z_s = sample_latents::<f32>(&mut rng, n, gc.nerf.dim_z);
    let z_a = sample_latents::<f32>(&mut rng, n, gc.inr.dim_z);
    let mut rgb = Vec::with_capacity(n);
    let mut aux = Vec::with_capacity(n);
    for k in 0..n {
        let pose = sample_camera(&mut rng, &config.train.pitch, &config.train.yaw, gc.fov, gc.near, gc.far)?;
        let zs = &z_s.data()[k * gc.nerf.dim_z..(k + 1) * gc.nerf.dim_z];
        let za = &z_a.data()[k * gc.inr.dim_z..(k + 1) * gc.inr.dim_z];
        let (img, nerf) = state
            .generator
            .render(&state.g_params, zs, za, &pose, res, res, DepthSampler::Midpoint)?;
        rgb.push(tensor_to_image(&img)?);
        aux.push(tensor_to_image(&nerf)?);
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    write_ppm(&dir.join(format!("{tag}.ppm")), &image_grid(&rgb, cols)?)?;
    write_ppm(&dir.join(format!("{tag}_nerf.ppm")), &image_grid(&aux, cols)?)
}

fn nan_dump(state: &TrainState<f32>, err: &Error) -> String {
    let mut s = format!("error: {err}\nstep: {}\nstage: {:?}\n", state.step, state.stage());
    for (label, store) in [
        ("generator", &state.g_params),
        ("discriminator", &state.d_params),
        ("discriminator_aux", &state.d_aux_params),
    ] {
        let _ = writeln!(s, "\n[{label}]");
        for (name, p) in store.iter() {
            let data = p.value.data();
            let finite = data.iter().filter(|v| v.is_finite()).count();
            let max = data.iter().filter(|v| v.is_finite()).fold(0f32, |m, v| m.max(v.abs()));
            let _ = writeln!(s, "{name} shape={:?} finite={finite}/{} max_abs={max:e}", p.value.shape(), data.len());
        }
    }
    s
}

/// Runs `config.steps` training steps into `out_dir`.
pub fn run_training(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let mut state = build_state(config)?;
    let ckpt_dir = out_dir.join("checkpoints");
    let sample_dir = out_dir.join("samples");
    mkdir(&ckpt_dir)?;
    mkdir(&sample_dir)?;
    write_atomic(&out_dir.join("config.json"), config.to_json().as_bytes())?;

    let csv_path = out_dir.join("losses.csv");
    let mut csv = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    writeln!(csv, "{CSV_HEADER}").map_err(|e| Error::io(&csv_path, e))?;

    let mut losses = Vec::with_capacity(config.steps as usize);
    while state.step < config.steps {
        let l = match state.train_step_auto() {
            Ok(l) => l,
            Err(e) => {
                if matches!(e, Error::NonFinite(_)) {
                    let _ = write_atomic(&out_dir.join("nan_dump.txt"), nan_dump(&state, &e).as_bytes());
                }
                return Err(e);
            }
        };
        writeln!(csv, "{}", csv_row(&l)).map_err(|e| Error::io(&csv_path, e))?;
        losses.push(l);
        let done = state.step;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.steps {
            checkpoint::save(&ckpt_dir.join(format!("generator_step{done:06}.ckpt")), &state.g_params)?;
        }
        if config.sample_every > 0 && done % config.sample_every == 0 {
            write_samples(&state, config, &sample_dir, &format!("step{done:06}"))?;
        }
    }
    csv.flush().map_err(|e| Error::io(&csv_path, e))?;

    let generator_checkpoint = ckpt_dir.join("generator.ckpt");
    checkpoint::save(&generator_checkpoint, &state.g_params)?;
    checkpoint::save(&ckpt_dir.join("discriminator.ckpt"), &state.d_params)?;
    checkpoint::save(&ckpt_dir.join("discriminator_aux.ckpt"), &state.d_aux_params)?;
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        losses,
        generator_checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::Stage;

    pub(crate) fn tiny_run() -> RunConfig {
        let mut c = RunConfig::default();
        c.generator.nerf.dim_z = 8;
        c.generator.nerf.dim_w = 8;
        c.generator.nerf.hidden = 8;
        c.generator.nerf.dim_v = 8;
        c.generator.inr.dim_z = 8;
        c.generator.inr.dim_w = 8;
        c.generator.inr.width = 8;
        c.generator.n_samples = 4;
        c.train.schedule = vec![Stage {
            start_step: 0,
            resolution: 4,
            n_r: Some(5),
        }];
        c.train.batch_size = 2;
        c.train.discriminator.base_channels = 4;
        c.train.aux_discriminator.base_channels = 2;
        c.train.r1_interval = 2;
        c.steps = 3;
        c.checkpoint_every = 2;
        c.sample_every = 2;
        c.sample_count = 2;
        c
    }

    #[test]
    fn run_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_run();
        let s = run_training(&cfg, dir.path()).unwrap();
        assert_eq!(s.losses.len(), 3);
        let csv = fs::read_to_string(dir.path().join("losses.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        for f in [
            "config.json",
            "checkpoints/generator.ckpt",
            "checkpoints/generator_step000002.ckpt",
            "checkpoints/discriminator.ckpt",
            "checkpoints/discriminator_aux.ckpt",
            "samples/step000002.ppm",
            "samples/step000002_nerf.ppm",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let snap = RunConfig::load(&dir.path().join("config.json")).unwrap();
        assert_eq!(snap, cfg);
    }

    #[test]
    fn lazy_r1_column_repeats_last_value() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_training(&tiny_run(), dir.path()).unwrap();
        // evaluated at steps 0 and 2 only
        assert_eq!(s.losses[0].r1, s.losses[1].r1);
        assert!(s.losses[0].r1 > 0.0);
    }

    #[test]
    fn diverging_run_writes_dump() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_run();
        cfg.train.lr_d = 1e30;
        cfg.train.lr_g = 1e30;
        cfg.steps = 20;
        let err = run_training(&cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
        let dump = fs::read_to_string(dir.path().join("nan_dump.txt")).unwrap();
        assert!(dump.contains("[discriminator]"));
    }
}
