//! Analytic gradients against central differences in f64.

mod common;

use common::gradchecks::*;

#[test]
fn film_siren_block_gradients() {
    let r = film_siren_block_check();
    assert_eq!(r.checked, 12 + 15 + 5 + 5 + 5);
    assert!(r.passes(TOL), "{r:?}");
}

#[test]
fn composite_gradients_wrt_density_and_feature() {
    let r = composite_check();
    assert_eq!(r.checked, 36 + 72);
    assert!(r.passes(TOL), "{r:?}");
}

#[test]
fn modfc_leaky_layer_gradients() {
    for demod in [true, false] {
        let r = modfc_leaky_check(demod);
        assert!(r.passes(TOL), "demod={demod}: {r:?}");
    }
}

#[test]
fn full_generator_two_by_two() {
    let (r, n) = generator_check();
    assert_eq!(r.checked, n);
    assert!(r.passes(TOL), "{r:?}");
    let r = generator_full_check();
    assert!(r.passes(TOL), "{r:?}");
}

#[test]
fn r1_penalty_parameter_gradient() {
    let (r, n) = r1_check();
    assert_eq!(r.checked, n);
    assert!(r.passes(R1_TOL), "{r:?}");
}
