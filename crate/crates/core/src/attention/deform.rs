//! Deformable convolution (v1): each kernel tap samples the input at its grid
//! position plus a learned fractional offset, using bilinear interpolation with
//! zeros outside the image.

use hsicolor_autograd::ops::gemm_into;
use hsicolor_autograd::{impl_module, Conv2dSpec, Float, Graph, Param, Tensor, Var};

use crate::nn::{init_weight, Conv2d};

#[derive(Clone, Copy)]
struct Geom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
}

impl Geom {
    fn taps(&self) -> usize {
        self.k * self.k
    }

    /// Sampling position of tap `t` at output `(y, x)` given its offset.
    #[inline]
    fn position<T: Float>(&self, y: usize, x: usize, t: usize, dy: T, dx: T) -> (T, T) {
        let r = (self.k / 2) as f64;
        let py = T::lit(y as f64 + (t / self.k) as f64 - r) + dy;
        let px = T::lit(x as f64 + (t % self.k) as f64 - r) + dx;
        (py, px)
    }
}

/// The four bilinear corners of a sampling position: pixel index (if inside
/// the image) and weight, plus the fractional parts.
struct Corners<T> {
    idx: [Option<usize>; 4],
    wt: [T; 4],
    ly: T,
    lx: T,
}

#[inline]
fn corners<T: Float>(g: &Geom, b: usize, py: T, px: T) -> Corners<T> {
    let y0 = py.floor();
    let x0 = px.floor();
    let (ly, lx) = (py - y0, px - x0);
    let (hy, hx) = (T::one() - ly, T::one() - lx);
    let y0 = y0.to_i64().unwrap_or(i64::MIN / 2);
    let x0 = x0.to_i64().unwrap_or(i64::MIN / 2);
    let at = |y: i64, x: i64| {
        (y >= 0 && x >= 0 && (y as usize) < g.h && (x as usize) < g.w).then(|| (b * g.h + y as usize) * g.w + x as usize)
    };
    Corners {
        idx: [at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)],
        wt: [hy * hx, hy * lx, ly * hx, ly * lx],
        ly,
        lx,
    }
}

/// Deformable `k x k` convolution, stride 1, size-preserving.
///
/// `x` is `[N, H, W, C]`, `offsets` is `[N, H, W, 2 k^2]` holding `(dy, dx)`
/// per tap in row-major tap order, `weight` is `[k, k, C, C_out]`.
pub fn deform_conv2d<'g, T: Float>(
    x: Var<'g, T>,
    offsets: Var<'g, T>,
    weight: Var<'g, T>,
    bias: Option<Var<'g, T>>,
) -> Var<'g, T> {
    let xs = x.shape();
    let os = offsets.shape();
    let ws = weight.shape();
    assert_eq!(xs.len(), 4, "deform_conv2d expects NHWC input");
    assert!(ws.len() == 4 && ws[0] == ws[1] && ws[0] % 2 == 1, "weight must be [k,k,C,Cout] with odd k");
    assert_eq!(ws[2], xs[3], "channel mismatch");
    let g = Geom {
        n: xs[0],
        h: xs[1],
        w: xs[2],
        c: xs[3],
        k: ws[0],
    };
    assert_eq!(os, [g.n, g.h, g.w, 2 * g.taps()], "offset field shape");
    let cout = ws[3];
    let (kc, rows) = (g.taps() * g.c, g.n * g.h * g.w);
    let xv = x.value();
    let ov = offsets.value();
    let wv = weight.value();

    let mut cols = vec![T::zero(); rows * kc];
    for row in 0..rows {
        let (b, y, xx) = (row / (g.h * g.w), row / g.w % g.h, row % g.w);
        let off = &ov.data()[row * 2 * g.taps()..(row + 1) * 2 * g.taps()];
        for t in 0..g.taps() {
            let (py, px) = g.position(y, xx, t, off[2 * t], off[2 * t + 1]);
            let cr = corners(&g, b, py, px);
            let dst = &mut cols[row * kc + t * g.c..row * kc + (t + 1) * g.c];
            for (idx, wt) in cr.idx.iter().zip(cr.wt) {
                if let Some(p) = idx {
                    for (d, &v) in dst.iter_mut().zip(&xv.data()[p * g.c..(p + 1) * g.c]) {
                        *d += wt * v;
                    }
                }
            }
        }
    }
    let mut out = vec![T::zero(); rows * cout];
    gemm_into(rows, kc, cout, &cols, false, wv.data(), false, T::zero(), &mut out);
    let out = Tensor::from_vec(&[g.n, g.h, g.w, cout], out);
    let (xshape, oshape, wshape) = (xs.clone(), os.clone(), ws.clone());

    let y = x.graph().op(out, &[x, offsets, weight], move |gr, needs| {
        let gd = gr.data();
        let dw = needs[2].then(|| {
            let mut dw = vec![T::zero(); kc * cout];
            gemm_into(kc, rows, cout, &cols, true, gd, false, T::zero(), &mut dw);
            Tensor::from_vec(&wshape, dw)
        });
        if !(needs[0] || needs[1]) {
            return vec![None, None, dw];
        }
        let mut dcols = vec![T::zero(); rows * kc];
        gemm_into(rows, cout, kc, gd, false, wv.data(), true, T::zero(), &mut dcols);
        let mut dx = vec![T::zero(); if needs[0] { xv.len() } else { 0 }];
        let mut doff = vec![T::zero(); if needs[1] { ov.len() } else { 0 }];
        let xd = xv.data();
        for row in 0..rows {
            let (b, y, xx) = (row / (g.h * g.w), row / g.w % g.h, row % g.w);
            let obase = row * 2 * g.taps();
            for t in 0..g.taps() {
                let off = &ov.data()[obase + 2 * t..obase + 2 * t + 2];
                let (py, px) = g.position(y, xx, t, off[0], off[1]);
                let cr = corners(&g, b, py, px);
                let gc = &dcols[row * kc + t * g.c..row * kc + (t + 1) * g.c];
                if needs[0] {
                    for (idx, wt) in cr.idx.iter().zip(cr.wt) {
                        if let Some(p) = idx {
                            for (d, &v) in dx[p * g.c..(p + 1) * g.c].iter_mut().zip(gc) {
                                *d += wt * v;
                            }
                        }
                    }
                }
                if needs[1] {
                    // d/dy and d/dx of the bilinear weights, per corner
                    let (hy, hx) = (T::one() - cr.ly, T::one() - cr.lx);
                    let wy = [-hx, -cr.lx, hx, cr.lx];
                    let wx = [-hy, hy, -cr.ly, cr.ly];
                    let (mut sy, mut sx) = (T::zero(), T::zero());
                    for (ci, idx) in cr.idx.iter().enumerate() {
                        if let Some(p) = idx {
                            let dot: T = xd[p * g.c..(p + 1) * g.c].iter().zip(gc).map(|(&a, &b)| a * b).sum();
                            sy += wy[ci] * dot;
                            sx += wx[ci] * dot;
                        }
                    }
                    doff[obase + 2 * t] = sy;
                    doff[obase + 2 * t + 1] = sx;
                }
            }
        }
        vec![
            needs[0].then(|| Tensor::from_vec(&xshape, dx)),
            needs[1].then(|| Tensor::from_vec(&oshape, doff)),
            dw,
        ]
    });
    match bias {
        Some(b) => y.add(b),
        None => y,
    }
}

/// Deformable 3x3 convolution whose offsets come from a 3x3 conv on the same
/// input. The offset conv starts at zero, so a fresh layer is a plain conv.
pub struct DeformConv<T: Float> {
    pub offset: Conv2d<T>,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl_module!(DeformConv { offset, weight, bias });

pub const DEFORM_KERNEL: usize = 3;

impl<T: Float> DeformConv<T> {
    pub fn new(cin: usize, cout: usize, rng: &mut dyn rand::RngCore) -> Self {
        let k = DEFORM_KERNEL;
        Self {
            offset: Conv2d::new(cin, 2 * k * k, k, Conv2dSpec::same(k), true, rng).zeroed(),
            weight: init_weight(&[k, k, cin, cout], k * k * cin, 1.0, rng),
            bias: Param::new(Tensor::zeros(&[cout])),
        }
    }

    pub fn offsets<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        self.offset.forward(g, x)
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let off = self.offsets(g, x);
        deform_conv2d(x, off, g.param(&self.weight), Some(g.param(&self.bias)))
    }

    /// Centre-tap identity kernel with zero bias.
    pub fn set_identity(&mut self) {
        let s = self.weight.shape().to_vec();
        assert_eq!(s[2], s[3], "identity needs cin == cout");
        let mut w = Tensor::zeros(&s);
        let m = s[0] / 2;
        for c in 0..s[2] {
            w.set(&[m, m, c, c], T::one());
        }
        self.weight.set(w);
        self.bias.value_mut().data_mut().fill(T::zero());
    }
}

/// Three cascaded deformable stages whose outputs are concatenated and fused
/// by a 1x1 conv.
pub struct DcnBranch<T: Float> {
    pub stages: Vec<DeformConv<T>>,
    pub fuse: Conv2d<T>,
}

impl_module!(DcnBranch { stages, fuse });

pub const DCN_STAGES: usize = 3;

impl<T: Float> DcnBranch<T> {
    pub fn new(c: usize, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            stages: (0..DCN_STAGES).map(|_| DeformConv::new(c, c, rng)).collect(),
            fuse: Conv2d::pointwise(DCN_STAGES * c, c, true, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let mut d = x;
        let mut outs = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            d = s.forward(g, d);
            outs.push(d);
        }
        self.fuse.forward(g, g.concat(&outs, 3))
    }
}
