//! Throughput comparison of the two ModFC implementations.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::inr::{modfc_efficient, modfc_reference};
use crate::nn::uniform;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub batch: usize,
    pub seq: usize,
    pub dim: usize,
    pub iters: usize,
    pub warmup: usize,
    pub demod: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch: 256,
            seq: 256,
            dim: 128,
            iters: 1000,
            warmup: 10,
            demod: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub reference_seconds: f64,
    pub efficient_seconds: f64,
    /// Batches per second.
    pub reference_throughput: f64,
    pub efficient_throughput: f64,
    pub max_abs_diff: f64,
}

impl BenchReport {
    pub fn speedup(&self) -> f64 {
        self.efficient_throughput / self.reference_throughput
    }
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "modfc b={} n={} d={} demod={} iters={} warmup={}",
            c.batch, c.seq, c.dim, c.demod, c.iters, c.warmup
        )?;
        writeln!(
            f,
            "reference: {:.3} batches/s ({:.3} ms/call)",
            self.reference_throughput,
            1e3 * self.reference_seconds / c.iters as f64
        )?;
        writeln!(
            f,
            "efficient: {:.3} batches/s ({:.3} ms/call)",
            self.efficient_throughput,
            1e3 * self.efficient_seconds / c.iters as f64
        )?;
        writeln!(f, "speedup: {:.3}x", self.speedup())?;
        write!(f, "max abs diff: {:.3e}", self.max_abs_diff)
    }
}

/// Times both paths on the same f32 inputs, `warmup` untimed calls then
/// `iters` timed calls each, and checks they agree.
pub fn bench_modfc(config: &BenchConfig) -> Result<BenchReport> {
    ensure!(
        config.batch > 0 && config.seq > 0 && config.dim > 0 && config.iters > 0,
        Contract,
        "benchmark sizes and iteration count must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (b, n, d) = (config.batch, config.seq, config.dim);
    let x: Tensor<f32> = uniform(&mut rng, &[b, n, d], 1.0);
    let w: Tensor<f32> = uniform(&mut rng, &[d, d], 1.0);
    let s: Tensor<f32> = uniform(&mut rng, &[b, d], 1.0);
    let bias: Tensor<f32> = uniform(&mut rng, &[d], 1.0);
    let eps = 1e-8;

    let y_ref = modfc_reference(&x, &w, &s, &bias, config.demod, eps)?;
    let y_eff = modfc_efficient(&x, &w, &s, &bias, config.demod, eps)?;
    let max_abs_diff = y_ref.max_abs_diff(&y_eff);

    let time = |f: &dyn Fn() -> Result<Tensor<f32>>| -> Result<f64> {
        for _ in 0..config.warmup {
            std::hint::black_box(f()?);
        }
        let start = Instant::now();
        for _ in 0..config.iters {
            std::hint::black_box(f()?);
        }
        Ok(start.elapsed().as_secs_f64())
    };
    let reference_seconds = time(&|| modfc_reference(&x, &w, &s, &bias, config.demod, eps))?;
    let efficient_seconds = time(&|| modfc_efficient(&x, &w, &s, &bias, config.demod, eps))?;
    Ok(BenchReport {
        config: config.clone(),
        reference_seconds,
        efficient_seconds,
        reference_throughput: config.iters as f64 / reference_seconds,
        efficient_throughput: config.iters as f64 / efficient_seconds,
        max_abs_diff,
    })
}
