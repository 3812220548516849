//! Weight-space operations on generator parameters: freezing the shape
//! branch, interpolating the appearance branch between two models, and
//! swapping its higher blocks.
//!
//! The appearance branch is `inr.*` plus its mapping network `map_a.*`; the
//! shape branch is `nerf.*` plus `map_s.*`.

use crate::autodiff::ParamStore;
use crate::error::{ensure, Error, Result};
use crate::inr::INR_BLOCKS;
use crate::tensor::Scalar;

pub fn is_shape_param(name: &str) -> bool {
    name.starts_with("nerf.") || name.starts_with("map_s.")
}

pub fn is_appearance_param(name: &str) -> bool {
    name.starts_with("inr.") || name.starts_with("map_a.")
}

/// Checks that every name belongs to exactly one branch.
pub fn check_namespaces<T: Scalar>(params: &ParamStore<T>) -> Result<()> {
    match params.names().find(|n| !is_shape_param(n) && !is_appearance_param(n)) {
        Some(n) => Err(Error::Surgery(format!("parameter {n} is outside the generator namespaces"))),
        None => Ok(()),
    }
}

/// Marks the shape branch frozen and the appearance branch trainable.
pub fn freeze_nerf<T: Scalar>(params: &mut ParamStore<T>) -> Result<()> {
    check_namespaces(params)?;
    params.set_trainable(is_shape_param, false);
    params.set_trainable(is_appearance_param, true);
    Ok(())
}

/// How closely the two shape branches must agree before surgery.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NerfEquality {
    Bitwise,
    /// Element-wise absolute difference at most `1e-12`.
    Approximate,
}

pub const NERF_TOLERANCE: f64 = 1e-12;

fn check_surgery_pair<T: Scalar>(base: &ParamStore<T>, other: &ParamStore<T>, eq: NerfEquality) -> Result<()> {
    check_namespaces(base)?;
    base.check_compatible(other)
        .map_err(|e| Error::Surgery(format!("models are not surgery-compatible: {e}")))?;
    for name in base.names().filter(|n| is_shape_param(n)) {
        let (a, b) = (base.value(name), other.value(name));
        let diff = a.max_abs_diff(b);
        let equal = match eq {
            NerfEquality::Bitwise => a.bit_eq(b),
            NerfEquality::Approximate => diff <= NERF_TOLERANCE,
        };
        ensure!(
            equal,
            Surgery,
            "shape-branch tensor {name} differs between the models (max abs diff {diff:e}); \
             both models must share the base model's shape network"
        );
    }
    Ok(())
}

/// `(1 − α)·base + α·transferred` on the appearance branch; the shape branch
/// is copied from `base`.
pub fn interpolate_inr<T: Scalar>(
    base: &ParamStore<T>,
    transferred: &ParamStore<T>,
    alpha: f64,
    eq: NerfEquality,
) -> Result<ParamStore<T>> {
    ensure!((0.0..=1.0).contains(&alpha), Surgery, "alpha {alpha} outside [0, 1]");
    check_surgery_pair(base, transferred, eq)?;
    let mut out = base.clone();
    // the endpoints are copied rather than computed so they are bit-exact
    if alpha == 0.0 {
        return Ok(out);
    }
    let (a, keep) = (T::lit(alpha), T::lit(1.0 - alpha));
    for (name, p) in out.iter_mut() {
        if !is_appearance_param(name) {
            continue;
        }
        let t = transferred.value(name);
        if alpha == 1.0 {
            p.value = t.clone();
        } else {
            for (w, &v) in p.value.data_mut().iter_mut().zip(t.data()) {
                *w = keep * *w + a * v;
            }
        }
    }
    Ok(out)
}

/// Block index of an appearance-network tensor (`inr.block{i}.…`).
pub fn inr_block_of(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("inr.block")?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Takes `inr.block{i}.*` for `i >= from_block` from `transferred` and
/// everything else from `base`.
pub fn swap_layers<T: Scalar>(
    base: &ParamStore<T>,
    transferred: &ParamStore<T>,
    from_block: usize,
    eq: NerfEquality,
) -> Result<ParamStore<T>> {
    ensure!(
        from_block <= INR_BLOCKS,
        Surgery,
        "from_block {from_block} outside 0..={INR_BLOCKS}"
    );
    check_surgery_pair(base, transferred, eq)?;
    let mut out = base.clone();
    for (name, p) in out.iter_mut() {
        if inr_block_of(name).is_some_and(|i| i >= from_block) {
            p.value = transferred.value(name).clone();
        }
    }
    Ok(out)
}
