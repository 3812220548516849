//! The finite-difference checks shared by the gradcheck tests and the
//! acceptance suite. Each returns its report and the tolerance it must meet.

use cips3d::autodiff::{finite_diff_check, GradReport, ParamStore};
use cips3d::gan::{r1_penalty, Discriminator, DiscriminatorConfig};
use cips3d::inr::ModFc;
use cips3d::nerf::film_siren_block;
use cips3d::render::composite_graph;
use cips3d::tensor::Tensor;

use super::*;

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const R1_TOL: f64 = 1e-3;

pub fn film_siren_block_check() -> GradReport {
    let mut p = ParamStore::new();
    p.insert("x", random_tensor(&[4, 3], 1, 1.0));
    p.insert("weight", random_tensor(&[3, 5], 2, 1.0));
    p.insert("bias", random_tensor(&[5], 3, 0.5));
    p.insert("gamma", random_tensor(&[1, 5], 4, 2.0));
    p.insert("beta", random_tensor(&[1, 5], 5, 1.0));
    finite_diff_check(&p, EPS, |g, b| {
        let y = film_siren_block(g, b["x"], b["gamma"], b["beta"], b["weight"], b["bias"]);
        readout(g, y, 9)
    })
}

pub fn composite_check() -> GradReport {
    let mut p = ParamStore::new();
    p.insert("sigma", random_tensor(&[2, 3, 6], 11, 1.0).map(|v| 4.0 * (v + 1.0)));
    p.insert("feature", random_tensor(&[2, 3, 6, 2], 12, 1.0));
    let deltas = random_tensor(&[2, 3, 6], 13, 1.0).map(|v| 0.05 + 0.04 * v);
    finite_diff_check(&p, EPS, |g, b| {
        let d = g.constant(deltas.clone());
        let (out, weights) = composite_graph(g, b["sigma"], b["feature"], d);
        let a = readout(g, out, 14);
        let w = readout(g, weights, 15);
        g.add(a, w)
    })
}

pub fn modfc_leaky_check(demod: bool) -> GradReport {
    let layer = ModFc {
        prefix: "fc".into(),
        d_in: 4,
        d_out: 3,
        demod,
    };
    let mut p = ParamStore::new();
    layer.init(&mut p, &mut rng(21), 5);
    // move the style affine away from its identity initialisation
    *p.value_mut("fc.style.weight") = random_tensor(&[5, 4], 22, 0.5);
    *p.value_mut("fc.bias") = random_tensor(&[3], 23, 0.3);
    p.insert("x", random_tensor(&[2, 6, 4], 24, 1.0));
    p.insert("w", random_tensor(&[2, 5], 25, 1.0));
    finite_diff_check(&p, EPS, |g, b| {
        let y = layer.forward(g, b, b["x"], b["w"], 1e-8);
        let y = g.leaky_relu(y, 0.2);
        readout(g, y, 26)
    })
}

/// The whole generator on a batch of two 2×2 images with every ray tracked,
/// through the training forward pass.
pub fn generator_check() -> (GradReport, usize) {
    let (gen, mut store, inp) = tiny_setup(2, 31);
    generic_point(&mut store, 35, 0.3);
    let r = finite_diff_check(&store, EPS, |g, b| {
        let out = gen.forward(g, b, &inp, 2, 2, 4, &mut rng(32)).unwrap();
        let a = readout(g, out.image, 33);
        let c = readout(g, out.aux_image, 34);
        g.add(a, c)
    });
    (r, store.num_elements())
}

pub fn generator_full_check() -> GradReport {
    let (gen, mut store, inp) = tiny_setup(2, 31);
    generic_point(&mut store, 35, 0.3);
    finite_diff_check(&store, EPS, |g, b| {
        let (img, aux) = gen.forward_full(g, b, &inp, 2, 2).unwrap();
        let a = readout(g, img, 33);
        let c = readout(g, aux, 34);
        g.add(a, c)
    })
}

pub fn r1_check() -> (GradReport, usize) {
    let d = Discriminator::new(
        "d",
        DiscriminatorConfig {
            base_channels: 2,
            layers: 2,
        },
    )
    .unwrap();
    let p: ParamStore<f64> = d.init(&mut rng(41));
    let real: Tensor<f64> = random_tensor(&[2, 4, 4, 3], 42, 1.0);
    let r = finite_diff_check(&p, EPS, |g, b| {
        let x = g.leaf(real.clone(), true);
        r1_penalty(g, &d, b, x, 10.0)
    });
    (r, p.num_elements())
}
