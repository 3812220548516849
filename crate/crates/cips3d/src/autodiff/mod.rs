//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every op is evaluated eagerly and appended to the tape. A node records its
//! inputs only when gradient tracking is enabled and at least one input
//! requires a gradient; everything else is stored as a constant. Backward
//! rules are themselves written in terms of graph ops, so a backward pass with
//! `create_graph = true` yields gradients that can be differentiated again
//! (the R1 penalty needs this).

mod backward;
pub mod gradcheck;
mod params;

use std::sync::Arc;

use crate::tensor::{self, ConvGeom, Scalar, Tensor};

pub use backward::Gradients;
pub use gradcheck::{finite_diff_check, GradReport};
pub use params::{Bound, Param, ParamStore};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    AddScalar,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Square,
    Recip,
    Softplus,
    Sigmoid,
    Tanh,
    LeakyRelu(f64),
    SumAxes { axes: Vec<usize>, keepdim: bool },
    BroadcastTo,
    Reshape,
    Transpose,
    MatMul,
    Bmm,
    Slice { axis: usize, start: usize },
    Pad { axis: usize, start: usize },
    Concat { axis: usize },
    GatherRows { idx: Arc<[usize]> },
    ScatterRows { idx: Arc<[usize]> },
    Im2Col(ConvGeom),
    Col2Im(ConvGeom),
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op,
    pub(crate) inputs: Vec<Var>,
    pub(crate) requires_grad: bool,
}

pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes that take part in backpropagation.
    pub fn tracked_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| n.requires_grad).count()
    }

    /// Total element count held by nodes that take part in backpropagation.
    pub fn tracked_elements(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.requires_grad)
            .map(|n| n.value.numel())
            .sum()
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    /// Turns recording on or off, returning the previous setting.
    pub fn set_grad_enabled(&mut self, on: bool) -> bool {
        std::mem::replace(&mut self.grad_enabled, on)
    }

    /// Runs `f` with recording disabled; its results are constants.
    pub fn no_grad<R>(&mut self, f: impl FnOnce(&mut Self) -> R) -> R {
        let prev = self.set_grad_enabled(false);
        let out = f(self);
        self.set_grad_enabled(prev);
        out
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input tensor; `requires_grad` marks it as a differentiation target.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            inputs: Vec::new(),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Same value as `v`, cut off from the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn push(&mut self, value: Tensor<T>, op: Op, inputs: &[Var]) -> Var {
        let track = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let (op, inputs) = if track {
            (op, inputs.to_vec())
        } else {
            (Op::Leaf, Vec::new())
        };
        self.nodes.push(Node {
            value,
            op,
            inputs,
            requires_grad: track,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(T) -> T) -> Var {
        let value = self.value(x).map(f);
        self.push(value, op, &[x])
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(T, T) -> T) -> Var {
        let value = tensor::binary_broadcast(self.value(a), self.value(b), f);
        self.push(value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div, |x, y| x / y)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, Op::Neg, |v| -v)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let k = T::lit(c);
        self.unary(x, Op::Scale(c), move |v| v * k)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let k = T::lit(c);
        self.unary(x, Op::AddScalar, move |v| v + k)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sin, T::sin)
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, Op::Cos, T::cos)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp, T::exp)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sqrt, T::sqrt)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square, |v| v * v)
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, Op::Recip, T::recip)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus, softplus)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid, sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh, T::tanh)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::lit(slope);
        self.unary(x, Op::LeakyRelu(slope), move |v| if v > T::zero() { v } else { v * s })
    }

    pub fn sum_axes(&mut self, x: Var, axes: &[usize], keepdim: bool) -> Var {
        let value = tensor::sum_axes(self.value(x), axes, keepdim);
        self.push(
            value,
            Op::SumAxes {
                axes: axes.to_vec(),
                keepdim,
            },
            &[x],
        )
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let axes: Vec<usize> = (0..self.value(x).rank()).collect();
        self.sum_axes(x, &axes, false)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn mean_axes(&mut self, x: Var, axes: &[usize], keepdim: bool) -> Var {
        let n: usize = axes.iter().map(|&a| self.value(x).dim(a)).product();
        let s = self.sum_axes(x, axes, keepdim);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Var {
        let value = tensor::broadcast_to(self.value(x), shape);
        self.push(value, Op::BroadcastTo, &[x])
    }

    /// Sums broadcast axes so the result has `shape`.
    pub fn sum_to_shape(&mut self, x: Var, shape: &[usize]) -> Var {
        if self.shape(x) == shape {
            return x;
        }
        let axes = tensor::reduce_axes(self.shape(x), shape);
        let s = self.sum_axes(x, &axes, true);
        self.reshape(s, shape)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        if self.shape(x) == shape {
            return x;
        }
        let value = self.value(x).clone().reshape(shape.to_vec());
        self.push(value, Op::Reshape, &[x])
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Var {
        let value = tensor::transpose_last2(self.value(x));
        self.push(value, Op::Transpose, &[x])
    }

    /// `x[..., k] · w[k, n]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let value = tensor::matmul(self.value(x), self.value(w));
        self.push(value, Op::MatMul, &[x, w])
    }

    /// `a[B, m, k] · b[B, k, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Var {
        let value = tensor::bmm(self.value(a), self.value(b));
        self.push(value, Op::Bmm, &[a, b])
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let value = tensor::slice_axis(self.value(x), axis, start, len);
        self.push(value, Op::Slice { axis, start }, &[x])
    }

    /// Embeds `x` at `start` along `axis` in a zero tensor of extent `total`.
    pub fn pad(&mut self, x: Var, axis: usize, start: usize, total: usize) -> Var {
        let value = tensor::pad_axis(self.value(x), axis, start, total);
        self.push(value, Op::Pad { axis, start }, &[x])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        if parts.len() == 1 {
            return parts[0];
        }
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = tensor::concat(&values, axis);
        self.push(value, Op::Concat { axis }, parts)
    }

    /// `out[b, i] = x[b, idx[b·m + i]]` for `x: [B, N, C]`; `idx` holds `B·m` row indices.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Var {
        let m = idx.len() / self.value(x).dim(0);
        let value = tensor::gather_rows(self.value(x), &idx, m);
        self.push(value, Op::GatherRows { idx }, &[x])
    }

    /// Adjoint of [`Graph::gather_rows`]: scatter-adds rows into `[B, n, C]`.
    pub fn scatter_rows(&mut self, x: Var, idx: Arc<[usize]>, n: usize) -> Var {
        let value = tensor::scatter_rows(self.value(x), &idx, n);
        self.push(value, Op::ScatterRows { idx }, &[x])
    }

    pub fn im2col(&mut self, x: Var, geom: ConvGeom) -> Var {
        let value = tensor::im2col(self.value(x), &geom);
        self.push(value, Op::Im2Col(geom), &[x])
    }

    pub fn col2im(&mut self, x: Var, geom: ConvGeom) -> Var {
        let value = tensor::col2im(self.value(x), &geom);
        self.push(value, Op::Col2Im(geom), &[x])
    }

    /// Square-kernel convolution on NHWC input with weight `[k·k·C_in, C_out]` and bias `[C_out]`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let s = self.shape(x).to_vec();
        assert_eq!(s.len(), 4, "conv2d expects NHWC input, got {s:?}");
        let geom = ConvGeom {
            batch: s[0],
            height: s[1],
            width: s[2],
            channels: s[3],
            kernel,
            stride,
            pad,
        };
        let cols = self.im2col(x, geom);
        let y = self.matmul(cols, weight);
        let y = self.add(y, bias);
        let c_out = self.shape(weight)[1];
        self.reshape(y, &[s[0], geom.out_height(), geom.out_width(), c_out])
    }
}

pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    // max(v, 0) + ln(1 + e^{-|v|})
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
