//! Central finite-difference gradient checking.

use super::{Bound, Graph, ParamStore, Var};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Parameter name and flat index with the largest relative error.
    pub worst_param: Option<(String, usize)>,
    /// Set when the function produced a non-finite value; the check then fails.
    pub non_finite: Option<(String, usize)>,
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.non_finite.is_none() && self.max_rel_err < rel_tol
    }
}

/// Compares reverse-mode gradients of the scalar built by `f` with
/// `(f(θ+ε·e) − f(θ−ε·e)) / 2ε` for every element of every trainable
/// parameter. Frozen parameters are skipped.
///
/// Relative error uses the denominator `max(|analytic|, |numeric|, 1e-12)`.
pub fn finite_diff_check(
    params: &ParamStore<f64>,
    eps: f64,
    f: impl Fn(&mut Graph<f64>, &Bound) -> Var,
) -> GradReport {
    assert!(eps > 0.0, "eps must be positive");
    let mut report = GradReport::default();

    let analytic = {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let out = f(&mut g, &bound);
        let value = g.value(out).item();
        if !value.is_finite() {
            report.non_finite = Some(("<base>".into(), 0));
            report.max_rel_err = f64::INFINITY;
            return report;
        }
        let grads = g.backward(out).expect("scalar output");
        bound
            .iter()
            .map(|(name, v)| (name.to_string(), grads.get(v).map(|t| t.data().to_vec())))
            .collect::<Vec<_>>()
    };

    let eval = |p: &ParamStore<f64>| {
        let mut g = Graph::new();
        let bound = p.bind(&mut g, false);
        let out = f(&mut g, &bound);
        g.value(out).item()
    };

    let mut probe = params.clone();
    for (name, grad) in analytic {
        if !params.param(&name).is_some_and(|p| p.trainable) {
            continue;
        }
        let n = params.value(&name).numel();
        for i in 0..n {
            let orig = params.value(&name).data()[i];
            probe.value_mut(&name).data_mut()[i] = orig + eps;
            let plus = eval(&probe);
            probe.value_mut(&name).data_mut()[i] = orig - eps;
            let minus = eval(&probe);
            probe.value_mut(&name).data_mut()[i] = orig;
            report.checked += 1;
            if !plus.is_finite() || !minus.is_finite() {
                report.non_finite.get_or_insert((name.clone(), i));
                report.max_rel_err = f64::INFINITY;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.as_ref().map_or(0.0, |g| g[i]);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-12);
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err || report.worst_param.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst_param = Some((name.clone(), i));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn square_at_three() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_f64([1], &[3.0]));
        let r = finite_diff_check(&p, 1e-5, |g, b| {
            let s = g.square(b["x"]);
            g.sum(s)
        });
        assert!(r.max_abs_err < 1e-8, "{r:?}");
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn frozen_branch_is_not_compared() {
        // f = x*y with y frozen: analytic df/dy is absent while numeric is not,
        // so y must be skipped.
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_f64([1], &[2.0]));
        p.insert("y", Tensor::from_f64([1], &[5.0]));
        p.set_trainable(|n| n == "y", false);
        let r = finite_diff_check(&p, 1e-5, |g, b| {
            let m = g.mul(b["x"], b["y"]);
            g.sum(m)
        });
        assert_eq!(r.checked, 1);
        assert!(r.passes(1e-8), "{r:?}");
    }

    #[test]
    fn non_finite_output_fails() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_f64([1], &[0.0]));
        let r = finite_diff_check(&p, 1e-5, |g, b| {
            let s = g.sqrt(b["x"]);
            let r = g.recip(s);
            g.sum(r)
        });
        assert!(!r.passes(1.0));
        assert!(r.non_finite.is_some());
    }
}
