//! NHWC convolutions. Weights are `[KH, KW, C_in, C_out]` for dense kernels and
//! `[KH, KW, C]` for depthwise kernels.

use super::linalg::gemm_into;
use crate::{Float, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zeros,
    Reflect,
    Circular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub pad_mode: PadMode,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
            pad_mode: PadMode::Zeros,
        }
    }
}

impl Conv2dSpec {
    /// Stride 1 with the padding that preserves size for an odd kernel.
    pub fn same(k: usize) -> Self {
        Self {
            padding: k / 2,
            ..Self::default()
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn padding(mut self, p: usize) -> Self {
        self.padding = p;
        self
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    pub fn pad_mode(mut self, m: PadMode) -> Self {
        self.pad_mode = m;
        self
    }

    pub fn out_size(&self, n: usize, k: usize) -> usize {
        let span = self.dilation * (k - 1) + 1;
        let padded = n + 2 * self.padding;
        assert!(padded >= span, "kernel span {span} exceeds padded input {padded}");
        (padded - span) / self.stride + 1
    }
}

#[derive(Clone, Copy)]
struct Geom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
    dil: usize,
}

impl Geom {
    /// Input pixel for output `(oy, ox)` and tap `(i, j)`, if inside the image.
    #[inline]
    fn src(&self, oy: usize, ox: usize, i: usize, j: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + i * self.dil) as isize - self.pad as isize;
        let x = (ox * self.stride + j * self.dil) as isize - self.pad as isize;
        (y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w)
            .then_some((y as usize, x as usize))
    }
}

fn im2col<T: Float>(x: &[T], g: &Geom) -> Vec<T> {
    let kc = g.kh * g.kw * g.c;
    let mut cols = vec![T::zero(); g.n * g.ho * g.wo * kc];
    for b in 0..g.n {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = ((b * g.ho + oy) * g.wo + ox) * kc;
                for i in 0..g.kh {
                    for j in 0..g.kw {
                        if let Some((y, xx)) = g.src(oy, ox, i, j) {
                            let s = ((b * g.h + y) * g.w + xx) * g.c;
                            let d = row + (i * g.kw + j) * g.c;
                            cols[d..d + g.c].copy_from_slice(&x[s..s + g.c]);
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Float>(cols: &[T], g: &Geom) -> Vec<T> {
    let kc = g.kh * g.kw * g.c;
    let mut x = vec![T::zero(); g.n * g.h * g.w * g.c];
    for b in 0..g.n {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = ((b * g.ho + oy) * g.wo + ox) * kc;
                for i in 0..g.kh {
                    for j in 0..g.kw {
                        if let Some((y, xx)) = g.src(oy, ox, i, j) {
                            let d = ((b * g.h + y) * g.w + xx) * g.c;
                            let s = row + (i * g.kw + j) * g.c;
                            for c in 0..g.c {
                                x[d + c] += cols[s + c];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

impl<'g, T: Float> Var<'g, T> {
    fn padded_for(self, spec: Conv2dSpec) -> (Var<'g, T>, usize) {
        match spec.pad_mode {
            PadMode::Zeros => (self, spec.padding),
            mode => {
                let p = spec.padding;
                (self.pad_spatial(p, p, p, p, mode), 0)
            }
        }
    }

    pub fn conv2d(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>, spec: Conv2dSpec) -> Var<'g, T> {
        let (x, pad) = self.padded_for(spec);
        let xs = x.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 4, "conv2d expects NHWC input, got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be [KH,KW,Cin,Cout]");
        assert_eq!(xs[3], ws[2], "conv2d channel mismatch {xs:?} vs {ws:?}");
        let cout = ws[3];
        let eff = Conv2dSpec { padding: pad, ..spec };
        let g = Geom {
            n: xs[0],
            h: xs[1],
            w: xs[2],
            c: xs[3],
            kh: ws[0],
            kw: ws[1],
            ho: eff.out_size(xs[1], ws[0]),
            wo: eff.out_size(xs[2], ws[1]),
            stride: spec.stride,
            pad,
            dil: spec.dilation,
        };
        let y = if g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0 {
            x.linear(weight.reshape(&[g.c, cout]), None)
        } else {
            let xv = x.value();
            let wv = weight.value();
            let kc = g.kh * g.kw * g.c;
            let rows = g.n * g.ho * g.wo;
            let cols = im2col(xv.data(), &g);
            let mut out = vec![T::zero(); rows * cout];
            gemm_into(rows, kc, cout, &cols, false, wv.data(), false, T::zero(), &mut out);
            let out = Tensor::from_vec(&[g.n, g.ho, g.wo, cout], out);
            let xshape = xs.clone();
            let wshape = ws.clone();
            x.graph().op(out, &[x, weight], move |gr, needs| {
                let gd = gr.data();
                let dw = needs[1].then(|| {
                    let mut dw = vec![T::zero(); kc * cout];
                    gemm_into(kc, rows, cout, &cols, true, gd, false, T::zero(), &mut dw);
                    Tensor::from_vec(&wshape, dw)
                });
                let dx = needs[0].then(|| {
                    let mut dcols = vec![T::zero(); rows * kc];
                    gemm_into(rows, cout, kc, gd, false, wv.data(), true, T::zero(), &mut dcols);
                    Tensor::from_vec(&xshape, col2im(&dcols, &g))
                });
                vec![dx, dw]
            })
        };
        match bias {
            Some(b) => y.add(b),
            None => y,
        }
    }

    pub fn depthwise_conv2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        spec: Conv2dSpec,
    ) -> Var<'g, T> {
        let (x, pad) = self.padded_for(spec);
        let xs = x.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 4, "depthwise_conv2d expects NHWC input");
        assert_eq!(ws.len(), 3, "depthwise weight must be [KH,KW,C]");
        assert_eq!(xs[3], ws[2], "depthwise channel mismatch {xs:?} vs {ws:?}");
        let eff = Conv2dSpec { padding: pad, ..spec };
        let g = Geom {
            n: xs[0],
            h: xs[1],
            w: xs[2],
            c: xs[3],
            kh: ws[0],
            kw: ws[1],
            ho: eff.out_size(xs[1], ws[0]),
            wo: eff.out_size(xs[2], ws[1]),
            stride: spec.stride,
            pad,
            dil: spec.dilation,
        };
        let xv = x.value();
        let wv = weight.value();
        let c = g.c;
        let mut out = vec![T::zero(); g.n * g.ho * g.wo * c];
        for b in 0..g.n {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let o = ((b * g.ho + oy) * g.wo + ox) * c;
                    for i in 0..g.kh {
                        for j in 0..g.kw {
                            if let Some((y, xx)) = g.src(oy, ox, i, j) {
                                let s = ((b * g.h + y) * g.w + xx) * c;
                                let k = (i * g.kw + j) * c;
                                let (xr, wr) = (&xv.data()[s..s + c], &wv.data()[k..k + c]);
                                for ((acc, &a), &w) in out[o..o + c].iter_mut().zip(xr).zip(wr) {
                                    *acc += a * w;
                                }
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(&[g.n, g.ho, g.wo, c], out);
        let xshape = xs.clone();
        let wshape = ws.clone();
        let y = x.graph().op(out, &[x, weight], move |gr, needs| {
            let gd = gr.data();
            let mut dx = vec![T::zero(); if needs[0] { xv.len() } else { 0 }];
            let mut dw = vec![T::zero(); if needs[1] { wv.len() } else { 0 }];
            for b in 0..g.n {
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        let o = ((b * g.ho + oy) * g.wo + ox) * c;
                        let go = &gd[o..o + c];
                        for i in 0..g.kh {
                            for j in 0..g.kw {
                                if let Some((y, xx)) = g.src(oy, ox, i, j) {
                                    let s = ((b * g.h + y) * g.w + xx) * c;
                                    let k = (i * g.kw + j) * c;
                                    if needs[0] {
                                        let wr = &wv.data()[k..k + c];
                                        for ((d, &gg), &w) in dx[s..s + c].iter_mut().zip(go).zip(wr) {
                                            *d += gg * w;
                                        }
                                    }
                                    if needs[1] {
                                        let xr = &xv.data()[s..s + c];
                                        for ((d, &gg), &a) in dw[k..k + c].iter_mut().zip(go).zip(xr) {
                                            *d += gg * a;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            vec![
                needs[0].then(|| Tensor::from_vec(&xshape, dx)),
                needs[1].then(|| Tensor::from_vec(&wshape, dw)),
            ]
        });
        match bias {
            Some(b) => y.add(b),
            None => y,
        }
    }
}
