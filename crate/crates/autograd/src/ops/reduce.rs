use crate::{Float, Tensor, Var};

fn keep_shape(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let mut s = shape.to_vec();
    for &a in axes {
        assert!(a < s.len(), "axis {a} out of range for {shape:?}");
        s[a] = 1;
    }
    s
}

fn drop_shape(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect()
}

fn expand<T: Float>(g: &Tensor<T>, keep: &[usize], full: &[usize]) -> Tensor<T> {
    let g = g.reshaped(keep);
    Tensor::zeros(full).broadcast_zip(&g, |_, y| y)
}

impl<'g, T: Float> Var<'g, T> {
    pub fn sum_all(self) -> Var<'g, T> {
        let shape = self.shape();
        let out = Tensor::scalar(self.value().sum());
        self.graph().op(out, &[self], move |g, _| {
            vec![Some(Tensor::full(&shape, g.item()))]
        })
    }

    pub fn mean_all(self) -> Var<'g, T> {
        let n = T::lit(self.value().len() as f64);
        self.sum_all().mul_scalar(T::one() / n)
    }

    pub fn sum_axes(self, axes: &[usize], keepdim: bool) -> Var<'g, T> {
        let shape = self.shape();
        let keep = keep_shape(&shape, axes);
        let out = self.value().sum_to_shape(&keep);
        let out = if keepdim {
            out
        } else {
            out.reshape(&drop_shape(&shape, axes))
        };
        self.graph()
            .op(out, &[self], move |g, _| vec![Some(expand(g, &keep, &shape))])
    }

    pub fn mean_axes(self, axes: &[usize], keepdim: bool) -> Var<'g, T> {
        let shape = self.shape();
        let n: usize = axes.iter().map(|&a| shape[a]).product();
        self.sum_axes(axes, keepdim)
            .mul_scalar(T::one() / T::lit(n as f64))
    }

    /// Maximum along one axis; the gradient goes to the first maximiser.
    pub fn max_axis(self, axis: usize, keepdim: bool) -> Var<'g, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let d = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut vals = vec![T::neg_infinity(); outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for k in 0..d {
                for i in 0..inner {
                    let v = x.data()[(o * d + k) * inner + i];
                    let slot = o * inner + i;
                    if v > vals[slot] || k == 0 {
                        vals[slot] = v;
                        arg[slot] = k;
                    }
                }
            }
        }
        let keep = keep_shape(&shape, &[axis]);
        let out_shape = if keepdim {
            keep
        } else {
            drop_shape(&shape, &[axis])
        };
        self.graph()
            .op(Tensor::from_vec(&out_shape, vals), &[self], move |g, _| {
                let mut dx = vec![T::zero(); outer * d * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let slot = o * inner + i;
                        dx[(o * d + arg[slot]) * inner + i] += g.data()[slot];
                    }
                }
                vec![Some(Tensor::from_vec(&shape, dx))]
            })
    }
}
