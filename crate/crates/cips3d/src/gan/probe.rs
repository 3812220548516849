//! Mirror-symmetry probe: compares a render at yaw `θ` with the horizontally
//! flipped render at `π − θ`. A score of zero means the two views are exact
//! mirror images.

use std::f64::consts::PI;

use crate::autodiff::ParamStore;
use crate::camera::DepthSampler;
use crate::error::{ensure, Result};
use crate::generator::Generator;
use crate::tensor::{Scalar, Tensor};

/// Reverses the column order of an `[H, W, C]` image.
pub fn flip_horizontal<T: Scalar>(img: &Tensor<T>) -> Tensor<T> {
    assert_eq!(img.rank(), 3, "flip expects [H, W, C], got {:?}", img.shape());
    let (h, w, c) = (img.dim(0), img.dim(1), img.dim(2));
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for i in 0..h {
        for j in (0..w).rev() {
            let at = (i * w + j) * c;
            out.extend_from_slice(&src[at..at + c]);
        }
    }
    Tensor::new([h, w, c], out)
}

/// `mean |a − flip(b)|`.
///
/// Mirrored column pairs are summed together, so swapping `a` and `b`
/// gives a bit-identical score.
pub fn mirror_score<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ensure!(
        a.rank() == 3 && a.shape() == b.shape(),
        Shape,
        "mirror score needs two equal [H, W, C] images, got {:?} and {:?}",
        a.shape(),
        b.shape()
    );
    let (h, w, c) = (a.dim(0), a.dim(1), a.dim(2));
    let (ad, bd) = (a.data(), b.data());
    let px = |i: usize, j: usize, k: usize| (i * w + j) * c + k;
    let term = |i, j, k| (ad[px(i, j, k)].as_f64() - bd[px(i, w - 1 - j, k)].as_f64()).abs();
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w.div_ceil(2) {
            let m = w - 1 - j;
            for k in 0..c {
                total += if j == m { term(i, j, k) } else { term(i, j, k) + term(i, m, k) };
            }
        }
    }
    Ok(total / a.numel() as f64)
}

/// Renders at `(pitch, yaw)` and `(pitch, π − yaw)` and scores the pair.
#[allow(clippy::too_many_arguments)]
pub fn symmetry_probe<T: Scalar>(
    gen: &Generator,
    store: &ParamStore<T>,
    z_s: &[T],
    z_a: &[T],
    yaw: f64,
    pitch: f64,
    height: usize,
    width: usize,
) -> Result<f64> {
    let a = gen.pose(pitch, yaw)?;
    let b = gen.pose(pitch, PI - yaw)?;
    let (img_a, _) = gen.render(store, z_s, z_a, &a, height, width, DepthSampler::Midpoint)?;
    let (img_b, _) = gen.render(store, z_s, z_a, &b, height, width, DepthSampler::Midpoint)?;
    mirror_score(&img_a, &img_b)
}
