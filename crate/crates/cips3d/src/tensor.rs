//! Dense row-major tensors and the numeric kernels behind every graph op.
//!
//! Kernels that reduce (matrix products, axis sums) always accumulate in a
//! fixed ascending order per output element. Splitting rows across workers or
//! evaluating a subset of rows therefore reproduces the same bits.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};
use rayon::prelude::*;

/// Floating-point element type for tensors. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + std::iter::Sum + 'static
{
    /// Tag stored in checkpoints.
    const DTYPE_TAG: u8;
    const BYTES: usize;

    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn write_le(self, out: &mut Vec<u8>);

    /// `bytes` has exactly `Self::BYTES` entries.
    fn read_le(bytes: &[u8]) -> Self;

    /// `c = a · b` for row-major `a: m×k`, `b: k×n`, all sizes nonzero.
    fn gemm_kernel(a: &[Self], b: &[Self], c: &mut [Self], m: usize, k: usize, n: usize);
}

impl Scalar for f32 {
    const DTYPE_TAG: u8 = 0;
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }

    fn gemm_kernel(a: &[Self], b: &[Self], c: &mut [Self], m: usize, k: usize, n: usize) {
        let (a, b, c) = (a.as_ptr(), b.as_ptr(), c.as_mut_ptr());
        // SAFETY: the caller guarantees `a`, `b` and `c` hold exactly m·k, k·n and
        // m·n elements in row-major order, and `c` does not alias the inputs.
        unsafe { matrixmultiply::sgemm(m, k, n, 1.0, a, k as isize, 1, b, n as isize, 1, 0.0, c, n as isize, 1) }
    }
}

impl Scalar for f64 {
    const DTYPE_TAG: u8 = 1;
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }

    fn gemm_kernel(a: &[Self], b: &[Self], c: &mut [Self], m: usize, k: usize, n: usize) {
        let (a, b, c) = (a.as_ptr(), b.as_ptr(), c.as_mut_ptr());
        // SAFETY: the caller guarantees `a`, `b` and `c` hold exactly m·k, k·n and
        // m·n elements in row-major order, and `c` does not alias the inputs.
        unsafe { matrixmultiply::dgemm(m, k, n, 1.0, a, k as isize, 1, b, n as isize, 1, 0.0, c, n as isize, 1) }
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= SHOWN {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "{:?}..", &self.data[..SHOWN])
        }
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl<T: Scalar> Tensor<T> {
    /// Panics if `data.len()` differs from the product of `shape` or a dim is zero.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Self {
        let shape = shape.into();
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor dims must be positive, got {shape:?}"
        );
        assert_eq!(
            numel(&shape),
            data.len(),
            "data length does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn full(shape: impl Into<Vec<usize>>, v: T) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Self::new(shape, vec![v; n])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let data = (0..numel(&shape)).map(f).collect();
        Self::new(shape, data)
    }

    pub fn from_f64(shape: impl Into<Vec<usize>>, data: &[f64]) -> Self {
        Self::new(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        assert_eq!(
            numel(&shape),
            self.data.len(),
            "cannot reshape {:?} into {shape:?}",
            self.shape
        );
        self.shape = shape;
        self
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Same shape and identical bit patterns (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &Tensor<T>) -> bool {
        if self.shape != other.shape {
            return false;
        }
        let (mut a, mut b) = (Vec::with_capacity(T::BYTES), Vec::with_capacity(T::BYTES));
        self.data.iter().zip(&other.data).all(|(&x, &y)| {
            a.clear();
            b.clear();
            x.write_le(&mut a);
            y.write_le(&mut b);
            a == b
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_all(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}

/// Numpy-style broadcast of two shapes (right-aligned).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside the broadcast `out` shape (0 on broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let offset = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// Iterates all multi-indices of `shape[..rank-1]`, calling `f(offset_a, offset_b, out_offset)`
/// for each row of the last axis.
fn for_each_row(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let last = out[rank - 1];
    let rows = numel(&out[..rank - 1]);
    let mut idx = vec![0usize; rank - 1];
    let (mut oa, mut ob) = (0usize, 0usize);
    for row in 0..rows {
        f(oa, ob, row * last);
        // increment multi-index
        let mut ax = rank - 1;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

pub fn binary_broadcast<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Tensor {
            shape: a.shape.clone(),
            data,
        };
    }
    let out = broadcast_shape(&a.shape, &b.shape)
        .unwrap_or_else(|| panic!("cannot broadcast {:?} with {:?}", a.shape, b.shape));
    let sa = broadcast_strides(&a.shape, &out);
    let sb = broadcast_strides(&b.shape, &out);
    let mut data = vec![T::zero(); numel(&out)];
    if out.is_empty() {
        data[0] = f(a.data[0], b.data[0]);
    } else {
        let last = *out.last().unwrap();
        let (la, lb) = (sa[out.len() - 1], sb[out.len() - 1]);
        for_each_row(&out, &sa, &sb, |oa, ob, oo| {
            let dst = &mut data[oo..oo + last];
            match (la, lb) {
                (1, 1) => {
                    for ((d, &x), &y) in dst.iter_mut().zip(&a.data[oa..oa + last]).zip(&b.data[ob..ob + last]) {
                        *d = f(x, y);
                    }
                }
                (1, 0) => {
                    let y = b.data[ob];
                    for (d, &x) in dst.iter_mut().zip(&a.data[oa..oa + last]) {
                        *d = f(x, y);
                    }
                }
                (0, 1) => {
                    let x = a.data[oa];
                    for (d, &y) in dst.iter_mut().zip(&b.data[ob..ob + last]) {
                        *d = f(x, y);
                    }
                }
                _ => {
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d = f(a.data[oa + j * la], b.data[ob + j * lb]);
                    }
                }
            }
        });
    }
    Tensor { shape: out, data }
}

pub fn broadcast_to<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let target = broadcast_shape(&x.shape, shape)
        .filter(|s| s.as_slice() == shape)
        .unwrap_or_else(|| panic!("cannot broadcast {:?} to {shape:?}", x.shape));
    let sx = broadcast_strides(&x.shape, &target);
    let mut data = vec![T::zero(); numel(&target)];
    if target.is_empty() {
        data[0] = x.data[0];
    } else {
        let last = *target.last().unwrap();
        let lx = sx[target.len() - 1];
        let zs = vec![0; target.len()];
        for_each_row(&target, &sx, &zs, |ox, _, oo| {
            let dst = &mut data[oo..oo + last];
            if lx == 1 {
                dst.copy_from_slice(&x.data[ox..ox + last]);
            } else if lx == 0 {
                dst.fill(x.data[ox]);
            } else {
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = x.data[ox + j * lx];
                }
            }
        });
    }
    Tensor {
        shape: target,
        data,
    }
}

/// Sums over `axes`. Axes are visited per output element in ascending index order.
pub fn sum_axes<T: Scalar>(x: &Tensor<T>, axes: &[usize], keepdim: bool) -> Tensor<T> {
    let rank = x.rank();
    let mut reduced = vec![false; rank];
    for &a in axes {
        assert!(a < rank, "sum axis {a} out of range for {:?}", x.shape);
        reduced[a] = true;
    }
    let kept: Vec<usize> = (0..rank)
        .map(|i| if reduced[i] { 1 } else { x.shape[i] })
        .collect();
    let ostr = strides(&kept);
    let mut data = vec![T::zero(); numel(&kept)];
    // Walk the input in row-major order; every output element then sees its
    // contributions in ascending flat order.
    let mut idx = vec![0usize; rank];
    for &v in &x.data {
        let mut o = 0;
        for i in 0..rank {
            if !reduced[i] {
                o += idx[i] * ostr[i];
            }
        }
        data[o] = data[o] + v;
        let mut ax = rank;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < x.shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    let shape = if keepdim {
        kept
    } else {
        (0..rank).filter(|&i| !reduced[i]).map(|i| x.shape[i]).collect()
    };
    Tensor { shape, data }
}

/// Reduces a broadcast result back to `shape` by summing the broadcast axes.
pub fn sum_to_shape<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if x.shape == shape {
        return x.clone();
    }
    let axes = reduce_axes(&x.shape, shape);
    sum_axes(x, &axes, true).reshape(shape.to_vec())
}

/// Axes of `from` that must be summed to reach `to` (which broadcasts to `from`).
pub fn reduce_axes(from: &[usize], to: &[usize]) -> Vec<usize> {
    let offset = from.len() - to.len();
    (0..from.len())
        .filter(|&i| i < offset || (to[i - offset] == 1 && from[i] != 1))
        .collect()
}

/// Swaps the last two axes.
pub fn transpose_last2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let r = x.rank();
    assert!(r >= 2, "transpose needs rank >= 2, got {:?}", x.shape);
    let (m, n) = (x.shape[r - 2], x.shape[r - 1]);
    let batch = numel(&x.shape[..r - 2]);
    let mut data = vec![T::zero(); x.numel()];
    for b in 0..batch {
        let src = &x.data[b * m * n..(b + 1) * m * n];
        let dst = &mut data[b * m * n..(b + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
    let mut shape = x.shape.clone();
    shape.swap(r - 2, r - 1);
    Tensor { shape, data }
}

const ROW_BLOCK: usize = 8;
const PAR_THRESHOLD: usize = 1 << 18;

/// `c = a · b` for row-major `a: m×k`, `b: k×n`. `c` is overwritten.
///
/// Every `c[i][j]` is accumulated over `p = 0..k` in the same order whatever
/// row it sits in, so results do not depend on how rows are partitioned.
pub fn gemm<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m * k * n >= PAR_THRESHOLD && m >= 2 * ROW_BLOCK && rayon::current_num_threads() > 1 {
        let rows_per = (m / rayon::current_num_threads()).max(ROW_BLOCK).next_multiple_of(ROW_BLOCK);
        c.par_chunks_mut(rows_per * n)
            .zip(a.par_chunks(rows_per * k))
            .for_each(|(cc, aa)| gemm_serial(aa, b, cc, aa.len() / k, k, n));
    } else {
        gemm_serial(a, b, c, m, k, n);
    }
}

fn gemm_serial<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(T::zero());
        return;
    }
    T::gemm_kernel(a, b, c, m, k, n);
}

/// `x[..., k] · w[k, n]`: leading axes of `x` are flattened into rows.
pub fn matmul<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    assert!(x.rank() >= 1 && w.rank() == 2, "matmul shapes {:?} · {:?}", x.shape, w.shape);
    let k = *x.shape.last().unwrap();
    assert_eq!(k, w.shape[0], "matmul inner dims {:?} · {:?}", x.shape, w.shape);
    let n = w.shape[1];
    let m = x.numel() / k;
    let mut data = vec![T::zero(); m * n];
    gemm(&x.data, &w.data, &mut data, m, k, n);
    let mut shape = x.shape.clone();
    *shape.last_mut().unwrap() = n;
    Tensor { shape, data }
}

/// Batched product `a[B, m, k] · b[B, k, n]`.
pub fn bmm<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert!(
        a.rank() == 3 && b.rank() == 3 && a.shape[0] == b.shape[0] && a.shape[2] == b.shape[1],
        "bmm shapes {:?} · {:?}",
        a.shape,
        b.shape
    );
    let (bs, m, k, n) = (a.shape[0], a.shape[1], a.shape[2], b.shape[2]);
    let mut data = vec![T::zero(); bs * m * n];
    let work = |(i, c): (usize, &mut [T])| {
        gemm_serial(&a.data[i * m * k..(i + 1) * m * k], &b.data[i * k * n..(i + 1) * k * n], c, m, k, n)
    };
    if bs * m * k * n >= PAR_THRESHOLD && bs > 1 && rayon::current_num_threads() > 1 {
        data.par_chunks_mut(m * n).enumerate().for_each(work);
    } else {
        data.chunks_mut(m * n).enumerate().for_each(work);
    }
    Tensor {
        shape: vec![bs, m, n],
        data,
    }
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (numel(&shape[..axis]), numel(&shape[axis + 1..]))
}

pub fn slice_axis<T: Scalar>(x: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    assert!(
        axis < x.rank() && start + len <= x.shape[axis] && len > 0,
        "slice axis {axis} [{start}, {}) of {:?}",
        start + len,
        x.shape
    );
    let (outer, inner) = outer_inner(&x.shape, axis);
    let d = x.shape[axis];
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * d * inner + start * inner;
        data.extend_from_slice(&x.data[base..base + len * inner]);
    }
    let mut shape = x.shape.clone();
    shape[axis] = len;
    Tensor { shape, data }
}

/// Places `x` at offset `start` along `axis` inside a zero tensor with `total` entries on that axis.
pub fn pad_axis<T: Scalar>(x: &Tensor<T>, axis: usize, start: usize, total: usize) -> Tensor<T> {
    let len = x.shape[axis];
    assert!(start + len <= total, "pad range exceeds target");
    let (outer, inner) = outer_inner(&x.shape, axis);
    let mut shape = x.shape.clone();
    shape[axis] = total;
    let mut data = vec![T::zero(); numel(&shape)];
    for o in 0..outer {
        let dst = o * total * inner + start * inner;
        data[dst..dst + len * inner].copy_from_slice(&x.data[o * len * inner..(o + 1) * len * inner]);
    }
    Tensor { shape, data }
}

pub fn concat<T: Scalar>(parts: &[&Tensor<T>], axis: usize) -> Tensor<T> {
    assert!(!parts.is_empty(), "concat of nothing");
    let first = parts[0];
    for p in parts {
        assert!(
            p.rank() == first.rank()
                && (0..first.rank()).all(|i| i == axis || p.shape[i] == first.shape[i]),
            "concat shapes differ off axis {axis}: {:?} vs {:?}",
            p.shape,
            first.shape
        );
    }
    let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
    let (outer, inner) = outer_inner(&first.shape, axis);
    let mut shape = first.shape.clone();
    shape[axis] = total;
    let mut data = Vec::with_capacity(numel(&shape));
    for o in 0..outer {
        for p in parts {
            let len = p.shape[axis] * inner;
            data.extend_from_slice(&p.data[o * len..(o + 1) * len]);
        }
    }
    Tensor { shape, data }
}

/// `out[b, i, :] = x[b, idx[b, i], :]` for `x: [B, N, C]` and `idx: B×M` (flattened).
pub fn gather_rows<T: Scalar>(x: &Tensor<T>, idx: &[usize], m: usize) -> Tensor<T> {
    assert_eq!(x.rank(), 3, "gather_rows expects [B, N, C], got {:?}", x.shape);
    let (bs, n, c) = (x.shape[0], x.shape[1], x.shape[2]);
    assert_eq!(idx.len(), bs * m, "gather index count");
    let mut data = Vec::with_capacity(bs * m * c);
    for b in 0..bs {
        for &i in &idx[b * m..(b + 1) * m] {
            assert!(i < n, "gather index {i} out of range {n}");
            let src = (b * n + i) * c;
            data.extend_from_slice(&x.data[src..src + c]);
        }
    }
    Tensor {
        shape: vec![bs, m, c],
        data,
    }
}

/// Adjoint of [`gather_rows`]: `out[b, idx[b, i], :] += g[b, i, :]` into `[B, n, C]` zeros.
pub fn scatter_rows<T: Scalar>(g: &Tensor<T>, idx: &[usize], n: usize) -> Tensor<T> {
    assert_eq!(g.rank(), 3, "scatter_rows expects [B, M, C], got {:?}", g.shape);
    let (bs, m, c) = (g.shape[0], g.shape[1], g.shape[2]);
    assert_eq!(idx.len(), bs * m, "scatter index count");
    let mut data = vec![T::zero(); bs * n * c];
    for b in 0..bs {
        for (r, &i) in idx[b * m..(b + 1) * m].iter().enumerate() {
            let dst = (b * n + i) * c;
            let src = (b * m + r) * c;
            for q in 0..c {
                data[dst + q] = data[dst + q] + g.data[src + q];
            }
        }
    }
    Tensor {
        shape: vec![bs, n, c],
        data,
    }
}

/// Geometry of a square-kernel 2D convolution over NHWC input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.batch, self.height, self.width, self.channels]
    }

    pub fn col_shape(&self) -> Vec<usize> {
        vec![
            self.batch * self.out_height() * self.out_width(),
            self.kernel * self.kernel * self.channels,
        ]
    }

    /// Calls `f(col_index, input_index)` for every in-bounds patch entry.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (ho, wo) = (self.out_height(), self.out_width());
        let cols = self.kernel * self.kernel * self.channels;
        for b in 0..self.batch {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = (b * ho + oy) * wo + ox;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.width as isize {
                                continue;
                            }
                            let src = ((b * self.height + iy as usize) * self.width + ix as usize)
                                * self.channels;
                            let dst = row * cols + (ky * self.kernel + kx) * self.channels;
                            for c in 0..self.channels {
                                f(dst + c, src + c);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn im2col<T: Scalar>(x: &Tensor<T>, geom: &ConvGeom) -> Tensor<T> {
    assert_eq!(x.shape, geom.input_shape(), "im2col input shape");
    let shape = geom.col_shape();
    let mut data = vec![T::zero(); numel(&shape)];
    geom.for_each_tap(|col, inp| data[col] = x.data[inp]);
    Tensor { shape, data }
}

pub fn col2im<T: Scalar>(cols: &Tensor<T>, geom: &ConvGeom) -> Tensor<T> {
    assert_eq!(cols.shape, geom.col_shape(), "col2im input shape");
    let shape = geom.input_shape();
    let mut data = vec![T::zero(); numel(&shape)];
    geom.for_each_tap(|col, inp| data[inp] = data[inp] + cols.data[col]);
    Tensor { shape, data }
}
