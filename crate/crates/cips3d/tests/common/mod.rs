#![allow(dead_code)]

pub mod gradchecks;

use std::collections::BTreeMap;

use cips3d::autodiff::{Bound, Graph, ParamStore, Var};
use cips3d::camera::DepthSampler;
use cips3d::generator::{sample_latents, Generator, GeneratorConfig, GeneratorInput};
use cips3d::inr::InrConfig;
use cips3d::nerf::NerfConfig;
use cips3d::tensor::{Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_config() -> GeneratorConfig {
    GeneratorConfig {
        nerf: NerfConfig {
            dim_z: 3,
            dim_w: 4,
            mapping_layers: 2,
            hidden: 5,
            dim_v: 3,
            omega0: 30.0,
        },
        inr: InrConfig {
            dim_z: 3,
            dim_w: 4,
            mapping_layers: 2,
            width: 4,
            demod_eps: 1e-8,
        },
        n_samples: 5,
        ..GeneratorConfig::default()
    }
}

pub fn input<T: Scalar>(gen: &Generator, batch: usize, seed: u64) -> GeneratorInput<T> {
    let mut r = rng(seed);
    GeneratorInput {
        z_s: sample_latents(&mut r, batch, gen.config.nerf.dim_z),
        z_a: sample_latents(&mut r, batch, gen.config.inr.dim_z),
        poses: (0..batch)
            .map(|k| gen.pose(1.4 + 0.1 * k as f64, 1.75 - 0.2 * k as f64).unwrap())
            .collect(),
        samplers: (0..batch).map(|k| DepthSampler::Jittered { seed: seed + 100 + k as u64 }).collect(),
    }
}

/// Tiny generator, f64 parameters and a batch of inputs.
pub fn tiny_setup(batch: usize, seed: u64) -> (Generator, ParamStore<f64>, GeneratorInput<f64>) {
    let gen = Generator::new(tiny_config()).unwrap();
    let store = gen.init(&mut rng(seed));
    let inp = input(&gen, batch, seed + 1);
    (gen, store, inp)
}

pub fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    use rand::Rng;
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(-scale..scale))
}

/// `Σ sin(x) ⊙ weights`: a nonlinear scalar readout with a fixed random projection.
pub fn readout(g: &mut Graph<f64>, x: Var, seed: u64) -> Var {
    let w = g.constant(random_tensor(g.shape(x), seed, 1.0));
    let s = g.sin(x);
    let m = g.mul(s, w);
    g.sum(m)
}

/// Gradients per parameter name, with missing entries filled by zeros.
pub fn grads_by_name(
    store: &ParamStore<f64>,
    g: &mut Graph<f64>,
    bound: &Bound,
    loss: Var,
) -> BTreeMap<String, Tensor<f64>> {
    let grads = g.backward(loss).unwrap();
    store
        .iter()
        .map(|(name, p)| {
            let t = grads
                .get(bound[name])
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.value.shape().to_vec()));
            (name.to_string(), t)
        })
        .collect()
}

pub fn max_grad_diff(a: &BTreeMap<String, Tensor<f64>>, b: &BTreeMap<String, Tensor<f64>>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().map(|(k, t)| t.max_abs_diff(&b[k])).fold(0.0, f64::max)
}

/// Moves every parameter off its initial value by `U(−scale, scale)` and
/// raises the density bias so rays pick up features of order one. Fresh
/// initialisations have zero biases, unit styles and almost empty space,
/// which puts many activations within a difference step of a kink.
pub fn generic_point(store: &mut ParamStore<f64>, seed: u64, scale: f64) {
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for (k, name) in names.iter().enumerate() {
        let shape = store.value(name).shape().to_vec();
        let noise = random_tensor(&shape, seed.wrapping_add(k as u64), scale);
        store.value_mut(name).add_assign(&noise);
    }
    if store.contains("nerf.sigma.bias") {
        let b = store.value_mut("nerf.sigma.bias");
        for v in b.data_mut() {
            *v += 3.0;
        }
    }
}

/// Generator gradients of `readout(image) + readout(aux)` through the
/// partial-gradient forward pass with `n_r` tracked rays per image, and the
/// mask it used.
pub fn partial_grads(
    gen: &Generator,
    store: &ParamStore<f64>,
    inp: &GeneratorInput<f64>,
    hw: (usize, usize),
    n_r: usize,
    seed: u64,
) -> (BTreeMap<String, Tensor<f64>>, Vec<bool>) {
    let mut g = Graph::new();
    let b = store.bind(&mut g, true);
    let out = gen.forward(&mut g, &b, inp, hw.0, hw.1, n_r, &mut rng(seed)).unwrap();
    let l1 = readout(&mut g, out.image, 71);
    let l2 = readout(&mut g, out.aux_image, 72);
    let loss = g.add(l1, l2);
    (grads_by_name(store, &mut g, &b, loss), out.grad_mask)
}

/// The oracle: a full forward pass where every pixel outside `mask` is
/// replaced by its detached copy, `m ⊙ x + (1 − m) ⊙ stop_grad(x)`.
pub fn masked_detach_grads(
    gen: &Generator,
    store: &ParamStore<f64>,
    inp: &GeneratorInput<f64>,
    hw: (usize, usize),
    mask: &[bool],
) -> BTreeMap<String, Tensor<f64>> {
    let mut g = Graph::new();
    let b = store.bind(&mut g, true);
    let (img, aux) = gen.forward_full(&mut g, &b, inp, hw.0, hw.1).unwrap();
    let shape = g.shape(img).to_vec();
    let m = Tensor::from_fn(shape.clone(), |i| if mask[i / 3] { 1.0 } else { 0.0 });
    let keep = Tensor::from_fn(shape, |i| if mask[i / 3] { 0.0 } else { 1.0 });
    let m = g.constant(m);
    let keep = g.constant(keep);
    let blend = |g: &mut Graph<f64>, x: Var| {
        let d = g.detach(x);
        let a = g.mul(x, m);
        let c = g.mul(d, keep);
        g.add(a, c)
    };
    let img = blend(&mut g, img);
    let aux = blend(&mut g, aux);
    let l1 = readout(&mut g, img, 71);
    let l2 = readout(&mut g, aux, 72);
    let loss = g.add(l1, l2);
    grads_by_name(store, &mut g, &b, loss)
}

/// Gradients of the unmasked full forward pass.
pub fn full_grads(
    gen: &Generator,
    store: &ParamStore<f64>,
    inp: &GeneratorInput<f64>,
    hw: (usize, usize),
) -> BTreeMap<String, Tensor<f64>> {
    masked_detach_grads(gen, store, inp, hw, &vec![true; inp.batch() * hw.0 * hw.1])
}
