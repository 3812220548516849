//! Non-saturating logistic GAN losses and the R1 gradient penalty.

use crate::autodiff::{Bound, Graph, Var};
use crate::tensor::{Scalar, Tensor};

use super::Discriminator;

/// `mean(softplus(−real)) + mean(softplus(fake))`.
pub fn discriminator_loss<T: Scalar>(g: &mut Graph<T>, real_logits: Var, fake_logits: Var) -> Var {
    let neg = g.neg(real_logits);
    let r = g.softplus(neg);
    let r = g.mean(r);
    let f = g.softplus(fake_logits);
    let f = g.mean(f);
    g.add(r, f)
}

/// `mean(softplus(−fake))`.
pub fn generator_loss<T: Scalar>(g: &mut Graph<T>, fake_logits: Var) -> Var {
    let neg = g.neg(fake_logits);
    let l = g.softplus(neg);
    g.mean(l)
}

/// `(loss_D, loss_G)` for one set of logits.
pub fn nonsaturating_losses<T: Scalar>(g: &mut Graph<T>, real_logits: Var, fake_logits: Var) -> (Var, Var) {
    (
        discriminator_loss(g, real_logits, fake_logits),
        generator_loss(g, fake_logits),
    )
}

/// `(gamma/2)·mean_b ‖∇_x D(x_b)‖²` at the tracked image batch `real`.
///
/// The pixel gradient stays on the tape, so differentiating the penalty
/// reaches the discriminator parameters through a second reverse pass.
pub fn r1_penalty<T: Scalar>(g: &mut Graph<T>, d: &Discriminator, p: &Bound, real: Var, gamma: f64) -> Var {
    let logits = d.forward(g, p, real);
    let total = g.sum(logits);
    match g.grad(total, &[real], true)[0] {
        None => g.constant(Tensor::scalar(T::zero())),
        Some(dx) => {
            let sq = g.square(dx);
            let per_image = g.sum_axes(sq, &[1, 2, 3], false);
            let m = g.mean(per_image);
            g.scale(m, gamma / 2.0)
        }
    }
}
