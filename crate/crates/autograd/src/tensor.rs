//! Dense row-major tensors.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Float;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// NumPy-style broadcast of two shapes, aligned on trailing axes.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` when viewed as broadcast into `out` (0 on broadcast axes).
pub fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = contiguous_strides(shape);
    let off = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < off || shape[i - off] == 1 {
                0
            } else {
                own[i - off]
            }
        })
        .collect()
}

/// Walks `out_shape` in row-major order, handing the callback the offsets of
/// every operand (given by their strides) for each run along the last axis.
///
/// The callback receives `(out_offset, operand_offsets, run_len, last_axis_strides)`.
pub(crate) fn for_each_run(
    out_shape: &[usize],
    strides: &[&[usize]],
    mut f: impl FnMut(usize, &[usize], usize, &[usize]),
) {
    let nd = out_shape.len();
    let n_ops = strides.len();
    if nd == 0 {
        f(0, &vec![0; n_ops], 1, &vec![0; n_ops]);
        return;
    }
    if numel(out_shape) == 0 {
        return;
    }
    let last = out_shape[nd - 1];
    let last_strides: Vec<usize> = strides.iter().map(|s| s[nd - 1]).collect();
    let mut counter = vec![0usize; nd - 1];
    let mut offs = vec![0usize; n_ops];
    let outer: usize = out_shape[..nd - 1].iter().product();
    for run in 0..outer {
        f(run * last, &offs, last, &last_strides);
        // advance the odometer over the leading axes
        let mut ax = nd - 1;
        while ax > 0 {
            ax -= 1;
            counter[ax] += 1;
            for (o, s) in offs.iter_mut().zip(strides) {
                *o += s[ax];
            }
            if counter[ax] < out_shape[ax] {
                break;
            }
            for (o, s) in offs.iter_mut().zip(strides) {
                *o -= s[ax] * out_shape[ax];
            }
            counter[ax] = 0;
        }
    }
}

impl<T: Float> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            numel(shape),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_vec(shape, vec![value; numel(shape)])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::from_vec(&[], vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        Self::from_vec(shape, (0..numel(shape)).map(&mut f).collect())
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Self {
        Self::from_vec(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    /// Normal samples drawn in `f64` so that `f32` and `f64` models built
    /// from the same seed agree up to rounding.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        })
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| T::lit(rng.random_range(lo..hi)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len());
        let mut o = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {ix} out of bounds for axis {i} of size {d}");
            o = o * d + ix;
        }
        o
    }

    pub fn reshape(self, shape: &[usize]) -> Self {
        Self::from_vec(shape, self.data)
    }

    pub fn reshaped(&self, shape: &[usize]) -> Self {
        self.clone().reshape(shape)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Elementwise `f(a, b)` with broadcasting.
    pub fn broadcast_zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        if self.shape == other.shape {
            return self.zip_map(other, f);
        }
        let out_shape = broadcast_shapes(&self.shape, &other.shape).unwrap_or_else(|| {
            panic!(
                "cannot broadcast {:?} with {:?}",
                self.shape, other.shape
            )
        });
        let sa = broadcast_strides(&self.shape, &out_shape);
        let sb = broadcast_strides(&other.shape, &out_shape);
        let mut out = vec![T::zero(); numel(&out_shape)];
        for_each_run(&out_shape, &[&sa, &sb], |o, offs, n, ls| {
            let (oa, ob) = (offs[0], offs[1]);
            for i in 0..n {
                out[o + i] = f(self.data[oa + i * ls[0]], other.data[ob + i * ls[1]]);
            }
        });
        Self::from_vec(&out_shape, out)
    }

    /// Sums a broadcast result back down to `shape`.
    pub fn sum_to_shape(&self, shape: &[usize]) -> Self {
        if self.shape == shape {
            return self.clone();
        }
        let target_strides = broadcast_strides(shape, &self.shape);
        let own = contiguous_strides(&self.shape);
        let mut out = vec![T::zero(); numel(shape)];
        for_each_run(&self.shape, &[&own, &target_strides], |_, offs, n, ls| {
            let (os, ot) = (offs[0], offs[1]);
            if ls[1] == 0 {
                let mut acc = T::zero();
                for i in 0..n {
                    acc += self.data[os + i];
                }
                out[ot] += acc;
            } else {
                for i in 0..n {
                    out[ot + i * ls[1]] += self.data[os + i];
                }
            }
        });
        Self::from_vec(shape, out)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "accumulate shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::lit(self.data.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn sq_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64_lossy()).collect()
    }

    pub fn permute(&self, axes: &[usize]) -> Self {
        let nd = self.shape.len();
        assert_eq!(axes.len(), nd, "permute axes {axes:?} for shape {:?}", self.shape);
        let own = contiguous_strides(&self.shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| own[a]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        for_each_run(&out_shape, &[&src_strides], |_, offs, n, ls| {
            for i in 0..n {
                out.push(self.data[offs[0] + i * ls[0]]);
            }
        });
        Self::from_vec(&out_shape, out)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        assert!(start + len <= self.shape[axis], "narrow out of range");
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let d = self.shape[axis];
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * d + start) * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Self::from_vec(&shape, out)
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Self {
        assert!(!parts.is_empty());
        let first = parts[0].shape();
        for p in parts {
            assert_eq!(p.ndim(), first.len(), "concat rank mismatch");
            for (i, (&a, &b)) in p.shape().iter().zip(first).enumerate() {
                assert!(i == axis || a == b, "concat shape mismatch {:?} vs {:?}", p.shape(), first);
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.to_vec();
        shape[axis] = total;
        Self::from_vec(&shape, out)
    }

    /// Gathers `indices` along `axis`; indices may repeat.
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Self {
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let d = self.shape[axis];
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &ix in indices {
                assert!(ix < d, "index {ix} out of range for axis of size {d}");
                let base = (o * d + ix) * inner;
                out.extend_from_slice(&self.data[base..base + inner]);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = indices.len();
        Self::from_vec(&shape, out)
    }

    /// Adjoint of [`index_select`](Self::index_select): scatter-adds rows back.
    pub fn index_add(&self, axis: usize, indices: &[usize], axis_len: usize) -> Self {
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        assert_eq!(self.shape[axis], indices.len());
        let mut shape = self.shape.clone();
        shape[axis] = axis_len;
        let mut out = vec![T::zero(); numel(&shape)];
        for o in 0..outer {
            for (j, &ix) in indices.iter().enumerate() {
                let src = (o * indices.len() + j) * inner;
                let dst = (o * axis_len + ix) * inner;
                for k in 0..inner {
                    out[dst + k] += self.data[src + k];
                }
            }
        }
        Self::from_vec(&shape, out)
    }
}
