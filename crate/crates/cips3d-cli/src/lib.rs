//! Command-line front end for the `cips3d` crate.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cips3d::autodiff::ParamStore;
use cips3d::bench::{bench_modfc, BenchConfig};
use cips3d::camera::DepthSampler;
use cips3d::checkpoint;
use cips3d::config::RunConfig;
use cips3d::gan::symmetry_probe;
use cips3d::generator::{sample_latents, Generator, GeneratorConfig};
use cips3d::image::{tensor_to_image, write_ppm};
use cips3d::posenc::{self, curve_csv, distance_curve, euclidean};
use cips3d::run::run_training;
use cips3d::surgery::{interpolate_inr, swap_layers, NerfEquality};

pub const THREADS_ENV: &str = "CIPS3D_THREADS";

/// Applies `CIPS3D_THREADS` to the global kernel pool.
pub fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV}={v:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

/// Parses `x,y,z` into a finite 3-vector.
pub fn parse_coords(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {}", parts.len()));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        let v: f64 = p.trim().parse().map_err(|_| format!("{:?} is not a number", p.trim()))?;
        if !v.is_finite() {
            return Err(format!("{v} is not finite"));
        }
        *o = v;
    }
    Ok(out)
}

#[derive(Parser, Debug)]
#[command(name = "cips3d", version, about = "3D-aware generator: training, rendering and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train from a JSON run config.
    Train {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one image and its shape-branch companion.
    Render {
        checkpoint: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, default_value_t = FRAC_PI_2)]
        pitch: f64,
        #[arg(long, default_value_t = FRAC_PI_2)]
        yaw: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render frames over a yaw range.
    SweepYaw {
        checkpoint: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, default_value_t = FRAC_PI_2)]
        pitch: f64,
        #[arg(long, default_value_t = FRAC_PI_2 - 0.5, allow_hyphen_values = true)]
        yaw_min: f64,
        #[arg(long, default_value_t = FRAC_PI_2 + 0.5, allow_hyphen_values = true)]
        yaw_max: f64,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        /// Output directory for frame_NNNN.ppm files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the reference and batched ModFC kernels.
    BenchModfc {
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 256)]
        seq: usize,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long)]
        no_demod: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Distances between encoded points as the frequency count grows.
    AnalyzePosenc {
        #[arg(long, default_value_t = 10)]
        l_max: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_coords, allow_hyphen_values = true)]
        a: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_coords, allow_hyphen_values = true)]
        b: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_coords, allow_hyphen_values = true)]
        c: Option<[f64; 3]>,
    },
    /// Blend the appearance branch of two checkpoints.
    InterpModels {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        alpha: f64,
    },
    /// Take the upper appearance blocks from the transferred checkpoint.
    SwapModels {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        from_block: usize,
    },
    /// Score mirror symmetry between renders at yaw and π − yaw.
    ProbeSymmetry {
        checkpoint: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, default_value_t = FRAC_PI_2)]
        pitch: f64,
        #[arg(long, default_value_t = FRAC_PI_2 - 0.4)]
        yaw: f64,
    },
}

#[derive(Args, Debug)]
pub struct ViewArgs {
    #[arg(long, default_value_t = 0)]
    pub seed_zs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_za: u64,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Run config describing the generator architecture (defaults otherwise).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub transferred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Accept shape-branch differences up to 1e-12 instead of requiring bit equality.
    #[arg(long)]
    pub approximate: bool,
}

fn generator_config(path: Option<&Path>) -> anyhow::Result<GeneratorConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?.generator,
        None => GeneratorConfig::default(),
    })
}

struct Loaded {
    generator: Generator,
    params: ParamStore<f32>,
    z_s: Vec<f32>,
    z_a: Vec<f32>,
    size: usize,
}

fn load_view(checkpoint_path: &Path, view: &ViewArgs) -> anyhow::Result<Loaded> {
    if view.size == 0 {
        bail!("--size must be positive");
    }
    let generator = Generator::new(generator_config(view.config.as_deref())?)?;
    let params: ParamStore<f32> = checkpoint::load(checkpoint_path)?;
    generator
        .check_params(&params)
        .with_context(|| format!("{} does not match the generator config", checkpoint_path.display()))?;
    let latent = |seed: u64, dim: usize| sample_latents::<f32>(&mut ChaCha8Rng::seed_from_u64(seed), 1, dim).data().to_vec();
    Ok(Loaded {
        z_s: latent(view.seed_zs, generator.config.nerf.dim_z),
        z_a: latent(view.seed_za, generator.config.inr.dim_z),
        generator,
        params,
        size: view.size,
    })
}

/// `foo.ppm` → `foo_nerf.ppm`.
pub fn nerf_companion(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_nerf{ext}"))
}

fn render_to(l: &Loaded, pitch: f64, yaw: f64, out: &Path) -> anyhow::Result<()> {
    let pose = l.generator.pose(pitch, yaw)?;
    let (rgb, aux) = l
        .generator
        .render(&l.params, &l.z_s, &l.z_a, &pose, l.size, l.size, DepthSampler::Midpoint)?;
    write_ppm(out, &tensor_to_image(&rgb)?)?;
    write_ppm(&nerf_companion(out), &tensor_to_image(&aux)?)?;
    Ok(())
}

fn equality(approximate: bool) -> NerfEquality {
    if approximate {
        NerfEquality::Approximate
    } else {
        NerfEquality::Bitwise
    }
}

fn load_pair(pair: &PairArgs) -> anyhow::Result<(ParamStore<f32>, ParamStore<f32>)> {
    Ok((checkpoint::load(&pair.base)?, checkpoint::load(&pair.transferred)?))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let summary = run_training(&cfg, &dir).with_context(|| format!("training run in {}", dir.display()))?;
            if let Some(last) = summary.losses.last() {
                println!(
                    "finished {} steps: loss_d={} loss_g={} checkpoint={}",
                    summary.losses.len(),
                    last.loss_d,
                    last.loss_g,
                    summary.generator_checkpoint.display()
                );
            }
        }
        Command::Render { checkpoint, view, pitch, yaw, out } => {
            let l = load_view(&checkpoint, &view)?;
            render_to(&l, pitch, yaw, &out)?;
            println!("wrote {} and {}", out.display(), nerf_companion(&out).display());
        }
        Command::SweepYaw { checkpoint, view, pitch, yaw_min, yaw_max, frames, out } => {
            if frames == 0 {
                bail!("--frames must be positive");
            }
            let l = load_view(&checkpoint, &view)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for k in 0..frames {
                let yaw = if frames == 1 {
                    yaw_min
                } else {
                    yaw_min + (yaw_max - yaw_min) * k as f64 / (frames - 1) as f64
                };
                render_to(&l, pitch, yaw, &out.join(format!("frame_{k:04}.ppm")))?;
            }
            println!("wrote {frames} frames to {}", out.display());
        }
        Command::BenchModfc { batch, seq, dim, iters, warmup, no_demod, seed } => {
            if batch == 0 || seq == 0 || dim == 0 || iters == 0 {
                bail!("--batch, --seq, --dim and --iters must be positive");
            }
            let report = bench_modfc(&BenchConfig { batch, seq, dim, iters, warmup, demod: !no_demod, seed })?;
            print!("{report}");
        }
        Command::AnalyzePosenc { l_max, out, a, b, c } => {
            let (pa, pb, pc) = posenc::proof_triple();
            let (a, b, c) = (a.unwrap_or(pa), b.unwrap_or(pb), c.unwrap_or(pc));
            let rows = distance_curve(a, b, c, l_max);
            cips3d::checkpoint::write_atomic(&out, curve_csv(&rows).as_bytes())?;
            println!("raw d(a,b)={:.9} d(a,c)={:.9}", euclidean(&a, &b), euclidean(&a, &c));
            if let Some(last) = rows.last() {
                println!("L={} encoded d(a,b)={:.9} d(a,c)={:.9}", last.levels, last.d_ab, last.d_ac);
            }
            match posenc::crossover(&rows) {
                Some(l) => println!("crossover L*={l}"),
                None => println!("no crossover up to L={l_max}"),
            }
        }
        Command::InterpModels { pair, alpha } => {
            let (base, transferred) = load_pair(&pair)?;
            let out = interpolate_inr(&base, &transferred, alpha, equality(pair.approximate))?;
            checkpoint::save(&pair.out, &out)?;
            println!("wrote {}", pair.out.display());
        }
        Command::SwapModels { pair, from_block } => {
            let (base, transferred) = load_pair(&pair)?;
            let out = swap_layers(&base, &transferred, from_block, equality(pair.approximate))?;
            checkpoint::save(&pair.out, &out)?;
            println!("wrote {}", pair.out.display());
        }
        Command::ProbeSymmetry { checkpoint, view, pitch, yaw } => {
            let l = load_view(&checkpoint, &view)?;
            let score = symmetry_probe(&l.generator, &l.params, &l.z_s, &l.z_a, yaw, pitch, l.size, l.size)?;
            println!("mirror score {score:.6e}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coords() {
        assert_eq!(parse_coords("1, -2.5,3e1"), Ok([1.0, -2.5, 30.0]));
        for bad in ["", "1,2", "1,2,3,4", "a,b,c", "1,2,inf", "NaN,0,0", "1,,2"] {
            assert!(parse_coords(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn companion_name() {
        assert_eq!(nerf_companion(Path::new("out/a.ppm")), PathBuf::from("out/a_nerf.ppm"));
        assert_eq!(nerf_companion(Path::new("img")), PathBuf::from("img_nerf"));
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
