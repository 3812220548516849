use std::collections::HashMap;

use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Gradients of a scalar with respect to the tracked leaves of a graph.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: HashMap<Var, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` when the leaf is unreachable from the loss or untracked.
    pub fn get(&self, leaf: Var) -> Option<&Tensor<T>> {
        self.grads.get(&leaf)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl<T: Scalar> Graph<T> {
    /// Reverse pass from a scalar `loss` to every tracked leaf.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let adj = self.propagate(loss, None, false);
        let mut grads = HashMap::new();
        for (i, a) in adj.into_iter().enumerate() {
            let node = &self.nodes[i];
            if let (Some(a), true, Op::Leaf) = (a, node.requires_grad, &node.op) {
                grads.insert(Var(i), self.nodes[a.0].value.clone());
            }
        }
        Ok(Gradients { grads })
    }

    /// Gradients of `sum(output)` with respect to `wrt`.
    ///
    /// With `create_graph` the returned vars stay on the tape and can be
    /// differentiated again. Entries are `None` where `output` does not
    /// depend on the target.
    pub fn grad(&mut self, output: Var, wrt: &[Var], create_graph: bool) -> Vec<Option<Var>> {
        let adj = self.propagate(output, Some(wrt), create_graph);
        wrt.iter().map(|w| adj.get(w.0).copied().flatten()).collect()
    }

    fn propagate(&mut self, output: Var, targets: Option<&[Var]>, create_graph: bool) -> Vec<Option<Var>> {
        let n = output.0 + 1;
        let mut needed = vec![false; n];
        for i in 0..n {
            let node = &self.nodes[i];
            needed[i] = match targets {
                None => node.requires_grad,
                Some(t) => {
                    t.contains(&Var(i))
                        || (node.requires_grad && node.inputs.iter().any(|v| needed[v.0]))
                }
            };
        }
        let mut adj: Vec<Option<Var>> = vec![None; n];
        if !needed[output.0] {
            return adj;
        }
        let prev = self.set_grad_enabled(create_graph);
        let seed = Tensor::ones(self.shape(output).to_vec());
        adj[output.0] = Some(self.constant(seed));
        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            if !needed[i] || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let inputs = self.nodes[i].inputs.clone();
            let want: Vec<bool> = inputs.iter().map(|v| needed[v.0]).collect();
            let contrib = self.vjp(&op, Var(i), &inputs, &want, g);
            for ((inp, c), w) in inputs.iter().zip(contrib).zip(want) {
                let Some(c) = c.filter(|_| w) else { continue };
                adj[inp.0] = Some(match adj[inp.0] {
                    None => c,
                    Some(acc) => self.add(acc, c),
                });
            }
        }
        self.set_grad_enabled(prev);
        adj
    }

    /// Vector-Jacobian products of one node, expressed as graph ops.
    fn vjp(&mut self, op: &Op, out: Var, inputs: &[Var], want: &[bool], g: Var) -> Vec<Option<Var>> {
        let x = inputs[0];
        let one = |v| vec![Some(v)];
        match op {
            Op::Leaf => vec![],
            Op::Add | Op::Sub => {
                let b = inputs[1];
                let ga = want[0].then(|| {
                    let s = self.shape(x).to_vec();
                    self.sum_to_shape(g, &s)
                });
                let gb = want[1].then(|| {
                    let s = self.shape(b).to_vec();
                    let r = self.sum_to_shape(g, &s);
                    if matches!(op, Op::Sub) {
                        self.neg(r)
                    } else {
                        r
                    }
                });
                vec![ga, gb]
            }
            Op::Mul => {
                let b = inputs[1];
                let ga = want[0].then(|| {
                    let s = self.shape(x).to_vec();
                    let p = self.mul(g, b);
                    self.sum_to_shape(p, &s)
                });
                let gb = want[1].then(|| {
                    let s = self.shape(b).to_vec();
                    let p = self.mul(g, x);
                    self.sum_to_shape(p, &s)
                });
                vec![ga, gb]
            }
            Op::Div => {
                let b = inputs[1];
                let ga = want[0].then(|| {
                    let s = self.shape(x).to_vec();
                    let p = self.div(g, b);
                    self.sum_to_shape(p, &s)
                });
                let gb = want[1].then(|| {
                    // d(a/b)/db = -out / b
                    let s = self.shape(b).to_vec();
                    let p = self.mul(g, out);
                    let p = self.div(p, b);
                    let p = self.neg(p);
                    self.sum_to_shape(p, &s)
                });
                vec![ga, gb]
            }
            Op::Neg => one(self.neg(g)),
            Op::Scale(c) => one(self.scale(g, *c)),
            Op::AddScalar => one(g),
            Op::Sin => {
                let c = self.cos(x);
                one(self.mul(g, c))
            }
            Op::Cos => {
                let s = self.sin(x);
                let p = self.mul(g, s);
                one(self.neg(p))
            }
            Op::Exp => one(self.mul(g, out)),
            Op::Sqrt => {
                let p = self.div(g, out);
                one(self.scale(p, 0.5))
            }
            Op::Square => {
                let p = self.mul(g, x);
                one(self.scale(p, 2.0))
            }
            Op::Recip => {
                let sq = self.square(out);
                let p = self.mul(g, sq);
                one(self.neg(p))
            }
            Op::Softplus => {
                let s = self.sigmoid(x);
                one(self.mul(g, s))
            }
            Op::Sigmoid => {
                let sq = self.square(out);
                let d = self.sub(out, sq);
                one(self.mul(g, d))
            }
            Op::Tanh => {
                let sq = self.square(out);
                let p = self.mul(g, sq);
                one(self.sub(g, p))
            }
            Op::LeakyRelu(slope) => {
                let s = T::lit(*slope);
                let mask = self
                    .value(x)
                    .map(|v| if v > T::zero() { T::one() } else { s });
                let m = self.constant(mask);
                one(self.mul(g, m))
            }
            Op::SumAxes { axes, keepdim } => {
                let in_shape = self.shape(x).to_vec();
                let g = if *keepdim {
                    g
                } else {
                    let kept: Vec<usize> = (0..in_shape.len())
                        .map(|i| if axes.contains(&i) { 1 } else { in_shape[i] })
                        .collect();
                    self.reshape(g, &kept)
                };
                one(self.broadcast_to(g, &in_shape))
            }
            Op::BroadcastTo => {
                let s = self.shape(x).to_vec();
                one(self.sum_to_shape(g, &s))
            }
            Op::Reshape => {
                let s = self.shape(x).to_vec();
                one(self.reshape(g, &s))
            }
            Op::Transpose => one(self.transpose(g)),
            Op::MatMul => {
                let w = inputs[1];
                let gx = want[0].then(|| {
                    let wt = self.transpose(w);
                    self.matmul(g, wt)
                });
                let gw = want[1].then(|| {
                    let k = self.shape(w)[0];
                    let n = self.shape(w)[1];
                    let rows = self.value(x).numel() / k;
                    let x2 = self.reshape(x, &[rows, k]);
                    let g2 = self.reshape(g, &[rows, n]);
                    let xt = self.transpose(x2);
                    self.matmul(xt, g2)
                });
                vec![gx, gw]
            }
            Op::Bmm => {
                let b = inputs[1];
                let ga = want[0].then(|| {
                    let bt = self.transpose(b);
                    self.bmm(g, bt)
                });
                let gb = want[1].then(|| {
                    let at = self.transpose(x);
                    self.bmm(at, g)
                });
                vec![ga, gb]
            }
            Op::Slice { axis, start } => {
                let total = self.shape(x)[*axis];
                one(self.pad(g, *axis, *start, total))
            }
            Op::Pad { axis, start } => {
                let len = self.shape(x)[*axis];
                one(self.slice(g, *axis, *start, len))
            }
            Op::Concat { axis } => {
                let mut start = 0;
                let mut res = Vec::with_capacity(inputs.len());
                for (inp, &w) in inputs.iter().zip(want) {
                    let len = self.shape(*inp)[*axis];
                    res.push(w.then(|| self.slice(g, *axis, start, len)));
                    start += len;
                }
                res
            }
            Op::GatherRows { idx } => {
                let n = self.shape(x)[1];
                one(self.scatter_rows(g, idx.clone(), n))
            }
            Op::ScatterRows { idx } => one(self.gather_rows(g, idx.clone())),
            Op::Im2Col(geom) => one(self.col2im(g, *geom)),
            Op::Col2Im(geom) => one(self.im2col(g, *geom)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::from_f64([2, 2], &[1., -2., 3., 0.5]), true);
        let loss = g.sum(w);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &Tensor::ones([2, 2]));
    }

    #[test]
    fn sum_sin_gives_cos() {
        let mut g = Graph::<f64>::new();
        let init = Tensor::from_f64([3], &[0.1, -1.3, 2.7]);
        let w = g.leaf(init.clone(), true);
        let s = g.sin(w);
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &init.map(f64::cos));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::ones([2]), true);
        assert!(matches!(g.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn untracked_leaf_has_no_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::ones([2]), true);
        let b = g.leaf(Tensor::ones([2]), false);
        let p = g.mul(a, b);
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(b).is_none());
        assert_eq!(grads.len(), 1);
    }

    #[test]
    fn shared_input_accumulates() {
        // loss = sum(x * x + 3x) -> 2x + 3
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64([2], &[1.0, -4.0]), true);
        let sq = g.mul(x, x);
        let three = g.scale(x, 3.0);
        let s = g.add(sq, three);
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[5.0, -5.0]);
    }

    #[test]
    fn second_order_through_create_graph() {
        // f = sum(x^3); df/dx = 3x^2; sum((df/dx)^2) = 9 sum x^4; its grad = 36 x^3
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64([2], &[0.5, -2.0]), true);
        let x2 = g.square(x);
        let x3 = g.mul(x2, x);
        let f = g.sum(x3);
        let dx = g.grad(f, &[x], true)[0].unwrap();
        assert_eq!(g.value(dx).data(), &[0.75, 12.0]);
        let sq = g.square(dx);
        let pen = g.sum(sq);
        let grads = g.backward(pen).unwrap();
        let got = grads.get(x).unwrap().data();
        assert!((got[0] - 36.0 * 0.125).abs() < 1e-12);
        assert!((got[1] - 36.0 * -8.0).abs() < 1e-12);
    }

    #[test]
    fn backward_is_deterministic() {
        let build = || {
            let mut g = Graph::<f32>::new();
            let w = g.leaf(Tensor::from_fn([4, 3], |i| (i as f32 * 0.41).sin()), true);
            let x = g.constant(Tensor::from_fn([5, 4], |i| (i as f32 * 0.13).cos()));
            let h = g.matmul(x, w);
            let h = g.sin(h);
            let loss = g.mean(h);
            let grads = g.backward(loss).unwrap();
            grads.get(w).unwrap().clone()
        };
        assert_eq!(build(), build());
    }
}
