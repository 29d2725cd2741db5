use crate::{Float, Graph, Tensor, Var};

fn invert(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Source index along an axis of length `n` for padded position `i - pad`.
fn pad_index(i: isize, n: usize, mode: super::conv::PadMode) -> usize {
    let n = n as isize;
    match mode {
        super::conv::PadMode::Circular => i.rem_euclid(n) as usize,
        super::conv::PadMode::Reflect => {
            if n == 1 {
                return 0;
            }
            let period = 2 * (n - 1);
            let m = i.rem_euclid(period);
            (if m < n { m } else { period - m }) as usize
        }
        super::conv::PadMode::Zeros => panic!("zero padding is handled by convolutions"),
    }
}

impl<T: Float> Graph<T> {
    pub fn concat<'g>(&'g self, parts: &[Var<'g, T>], axis: usize) -> Var<'g, T> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let out = Tensor::concat(&refs, axis);
        let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        self.op(out, parts, move |g, needs| {
            let mut start = 0;
            sizes
                .iter()
                .zip(needs)
                .map(|(&n, &need)| {
                    let s = start;
                    start += n;
                    need.then(|| g.narrow(axis, s, n))
                })
                .collect()
        })
    }
}

impl<'g, T: Float> Var<'g, T> {
    pub fn reshape(self, shape: &[usize]) -> Var<'g, T> {
        let old = self.shape();
        let out = self.value().reshaped(shape);
        self.graph()
            .op(out, &[self], move |g, _| vec![Some(g.reshaped(&old))])
    }

    pub fn permute(self, axes: &[usize]) -> Var<'g, T> {
        let inv = invert(axes);
        let out = self.value().permute(axes);
        self.graph()
            .op(out, &[self], move |g, _| vec![Some(g.permute(&inv))])
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g, T> {
        let shape = self.shape();
        let out = self.value().narrow(axis, start, len);
        self.graph().op(out, &[self], move |g, _| {
            let d = shape[axis];
            let mut parts = Vec::new();
            let before = (start > 0).then(|| {
                let mut s = shape.clone();
                s[axis] = start;
                Tensor::zeros(&s)
            });
            let after = (start + len < d).then(|| {
                let mut s = shape.clone();
                s[axis] = d - start - len;
                Tensor::zeros(&s)
            });
            if let Some(b) = &before {
                parts.push(b);
            }
            parts.push(g);
            if let Some(a) = &after {
                parts.push(a);
            }
            vec![Some(Tensor::concat(&parts, axis))]
        })
    }

    pub fn index_select(self, axis: usize, indices: &[usize]) -> Var<'g, T> {
        let n = self.shape()[axis];
        let idx = indices.to_vec();
        let out = self.value().index_select(axis, indices);
        self.graph()
            .op(out, &[self], move |g, _| vec![Some(g.index_add(axis, &idx, n))])
    }

    /// Broadcasts to `shape` (trailing alignment).
    pub fn broadcast_to(self, shape: &[usize]) -> Var<'g, T> {
        let own = self.shape();
        let out = Tensor::zeros(shape).broadcast_zip(&self.value(), |_, y| y);
        assert_eq!(out.shape(), shape, "cannot broadcast {own:?} to {shape:?}");
        self.graph()
            .op(out, &[self], move |g, _| vec![Some(g.sum_to_shape(&own))])
    }

    /// Pads axes 1 and 2 of an NHWC tensor by reflection or wrap-around.
    pub fn pad_spatial(
        self,
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
        mode: super::conv::PadMode,
    ) -> Var<'g, T> {
        let s = self.shape();
        assert_eq!(s.len(), 4, "pad_spatial expects NHWC");
        let (h, w) = (s[1], s[2]);
        let rows: Vec<usize> = (0..h + top + bottom)
            .map(|i| pad_index(i as isize - top as isize, h, mode))
            .collect();
        let cols: Vec<usize> = (0..w + left + right)
            .map(|j| pad_index(j as isize - left as isize, w, mode))
            .collect();
        self.index_select(1, &rows).index_select(2, &cols)
    }

    /// NHWC depth-to-space: channel `c*r*r + i*r + j` of pixel `(y, x)` lands
    /// at `(y*r + i, x*r + j)` in output channel `c`.
    pub fn pixel_shuffle(self, r: usize) -> Var<'g, T> {
        let s = self.shape();
        let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
        assert_eq!(c % (r * r), 0, "channels {c} not divisible by {r}^2");
        let co = c / (r * r);
        self.reshape(&[n, h, w, co, r, r])
            .permute(&[0, 1, 4, 2, 5, 3])
            .reshape(&[n, h * r, w * r, co])
    }

    /// Inverse of [`pixel_shuffle`](Self::pixel_shuffle).
    pub fn pixel_unshuffle(self, r: usize) -> Var<'g, T> {
        let s = self.shape();
        let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
        assert!(h % r == 0 && w % r == 0, "size {h}x{w} not divisible by {r}");
        self.reshape(&[n, h / r, r, w / r, r, c])
            .permute(&[0, 1, 3, 5, 2, 4])
            .reshape(&[n, h / r, w / r, c * r * r])
    }
}
