//! Real 2-D FFTs over the spatial axes of NHWC maps. A half spectrum is stored
//! as `[N, H, W/2 + 1, C, 2]` with the real and imaginary parts last.

use hsicolor_autograd::{Float, Graph, Tensor, Var};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// In-place 2-D FFT of an `h x w` row-major plane.
fn fft2_plane<T: Float>(planner: &mut FftPlanner<T>, plane: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(plane);
    let mut column = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = plane[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            plane[y * w + x] = column[y];
        }
    }
}

fn half_width(w: usize) -> usize {
    w / 2 + 1
}

/// Bins counted once when the half spectrum is expanded: DC and, for even
/// widths, Nyquist. All other columns stand for a conjugate pair.
fn column_weight<T: Float>(l: usize, w: usize) -> T {
    if l == 0 || (w % 2 == 0 && l == w / 2) {
        T::one()
    } else {
        T::lit(2.0)
    }
}

pub(crate) fn rfft2_raw<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let wf = half_width(w);
    let mut planner = FftPlanner::new();
    let mut out = vec![T::zero(); n * h * wf * c * 2];
    let mut plane = vec![Complex::new(T::zero(), T::zero()); h * w];
    for b in 0..n {
        for ch in 0..c {
            for p in 0..h * w {
                plane[p] = Complex::new(x.data()[(b * h * w + p) * c + ch], T::zero());
            }
            fft2_plane(&mut planner, &mut plane, h, w, false);
            for y in 0..h {
                for l in 0..wf {
                    let o = (((b * h + y) * wf + l) * c + ch) * 2;
                    out[o] = plane[y * w + l].re;
                    out[o + 1] = plane[y * w + l].im;
                }
            }
        }
    }
    Tensor::from_vec(&[n, h, wf, c, 2], out)
}

/// Real output of width `w` from a half spectrum; imaginary parts of the DC
/// and Nyquist columns do not contribute.
pub(crate) fn irfft2_raw<T: Float>(spec: &Tensor<T>, w: usize) -> Tensor<T> {
    let s = spec.shape();
    let (n, h, wf, c) = (s[0], s[1], s[2], s[3]);
    assert_eq!(wf, half_width(w), "half spectrum width {wf} does not match output width {w}");
    let mut planner = FftPlanner::new();
    let mut out = vec![T::zero(); n * h * w * c];
    let mut plane = vec![Complex::new(T::zero(), T::zero()); h * w];
    let scale = T::one() / T::lit((h * w) as f64);
    let half = T::lit(0.5);
    let at = |b: usize, y: usize, l: usize, ch: usize| {
        let o = (((b * h + y) * wf + l) * c + ch) * 2;
        Complex::new(spec.data()[o], spec.data()[o + 1])
    };
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                let ny = (h - y) % h;
                for l in 0..w {
                    plane[y * w + l] = if l == 0 || (w % 2 == 0 && l == w / 2) {
                        // Hermitian part of a self-paired column
                        (at(b, y, l, ch) + at(b, ny, l, ch).conj()) * half
                    } else if l < wf {
                        at(b, y, l, ch)
                    } else {
                        at(b, ny, w - l, ch).conj()
                    };
                }
            }
            fft2_plane(&mut planner, &mut plane, h, w, true);
            for p in 0..h * w {
                out[(b * h * w + p) * c + ch] = plane[p].re * scale;
            }
        }
    }
    Tensor::from_vec(&[n, h, w, c], out)
}

fn scale_columns<T: Float>(spec: &Tensor<T>, w: usize, f: impl Fn(T) -> T) -> Tensor<T> {
    let s = spec.shape();
    let (wf, c) = (s[2], s[3]);
    let mut out = spec.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let l = (i / (c * 2)) % wf;
        *v = *v * f(column_weight(l, w));
    }
    out
}

/// Unnormalised forward transform of the spatial axes.
pub fn rfft2<'g, T: Float>(x: Var<'g, T>) -> Var<'g, T> {
    let s = x.shape();
    let (h, w) = (s[1], s[2]);
    let out = rfft2_raw(&x.value());
    x.graph().op(out, &[x], move |g, _| {
        let hw = T::lit((h * w) as f64);
        let g = scale_columns(g, w, |wl| T::one() / wl);
        vec![Some(irfft2_raw(&g, w).scale(hw))]
    })
}

/// Inverse of [`rfft2`] producing a real map of width `w`.
pub fn irfft2<'g, T: Float>(spec: Var<'g, T>, w: usize) -> Var<'g, T> {
    let h = spec.shape()[1];
    let out = irfft2_raw(&spec.value(), w);
    spec.graph().op(out, &[spec], move |g, _| {
        let inv_hw = T::one() / T::lit((h * w) as f64);
        let d = rfft2_raw(g);
        vec![Some(scale_columns(&d, w, |wl| wl * inv_hw))]
    })
}

/// Elementwise complex product of a spectrum `[N, H, Wf, C, 2]` with weights
/// `[H, Wf, C, 2]` shared across the batch.
pub fn complex_mul<'g, T: Float>(z: Var<'g, T>, wt: Var<'g, T>) -> Var<'g, T> {
    let zs = z.shape();
    let ws = wt.shape();
    assert_eq!(&zs[1..], &ws[..], "spectral weight shape {ws:?} does not match spectrum {zs:?}");
    let zv = z.value();
    let wv = wt.value();
    let m = wv.len() / 2;
    let n = zs[0];
    let mut out = vec![T::zero(); zv.len()];
    for b in 0..n {
        for i in 0..m {
            let (zr, zi) = (zv.data()[(b * m + i) * 2], zv.data()[(b * m + i) * 2 + 1]);
            let (wr, wi) = (wv.data()[i * 2], wv.data()[i * 2 + 1]);
            out[(b * m + i) * 2] = zr * wr - zi * wi;
            out[(b * m + i) * 2 + 1] = zr * wi + zi * wr;
        }
    }
    let out = Tensor::from_vec(&zs, out);
    z.graph().op(out, &[z, wt], move |g, needs| {
        let gd = g.data();
        let mut dz = vec![T::zero(); zv.len()];
        let mut dw = vec![T::zero(); wv.len()];
        for b in 0..n {
            for i in 0..m {
                let k = (b * m + i) * 2;
                let (gr, gi) = (gd[k], gd[k + 1]);
                let (zr, zi) = (zv.data()[k], zv.data()[k + 1]);
                let (wr, wi) = (wv.data()[i * 2], wv.data()[i * 2 + 1]);
                // conj(w) * g and conj(z) * g
                dz[k] = wr * gr + wi * gi;
                dz[k + 1] = wr * gi - wi * gr;
                dw[i * 2] += zr * gr + zi * gi;
                dw[i * 2 + 1] += zr * gi - zi * gr;
            }
        }
        vec![
            needs[0].then(|| Tensor::from_vec(&zs, dz)),
            needs[1].then(|| Tensor::from_vec(&ws, dw)),
        ]
    })
}

/// Linear-interpolation matrix `[dst, src]` between two frequency grids.
/// Full axes wrap around (signed frequencies); half axes clamp.
fn interp_matrix(dst_bins: usize, dst_len: usize, src_bins: usize, src_len: usize, wrap: bool) -> Vec<f64> {
    let mut m = vec![0.0; dst_bins * src_bins];
    for k in 0..dst_bins {
        let signed = if wrap && k > dst_len / 2 {
            k as f64 - dst_len as f64
        } else {
            k as f64
        };
        let pos = signed / dst_len as f64 * src_len as f64;
        let lo = pos.floor();
        let t = pos - lo;
        for (idx, wgt) in [(lo as isize, 1.0 - t), (lo as isize + 1, t)] {
            if wgt == 0.0 {
                continue;
            }
            let j = if wrap {
                idx.rem_euclid(src_bins as isize) as usize
            } else {
                idx.clamp(0, src_bins as isize - 1) as usize
            };
            m[k * src_bins + j] += wgt;
        }
    }
    m
}

/// Resamples spectral weights `[Hs, Wf, C, 2]` learned for an `Hs x Ws` map to
/// the half-spectrum grid of an `h x w` map. Identity when sizes agree.
pub fn resample_spectrum<'g, T: Float>(g: &'g Graph<T>, wt: Var<'g, T>, src_w: usize, h: usize, w: usize) -> Var<'g, T> {
    let s = wt.shape();
    let (hs, wfs, c) = (s[0], s[1], s[2]);
    let wf = half_width(w);
    if hs == h && src_w == w {
        return wt;
    }
    let rh = g.constant(Tensor::from_f64(&[h, hs], &interp_matrix(h, h, hs, hs, true)));
    let rw = g.constant(Tensor::from_f64(&[wf, wfs], &interp_matrix(wf, w, wfs, src_w, false)));
    let rows = rh.matmul(wt.reshape(&[hs, wfs * c * 2])); // [h, wfs*c*2]
    let cols = rows
        .reshape(&[h, wfs, c * 2])
        .permute(&[0, 2, 1])
        .matmul(rw.permute(&[1, 0])); // [h, c*2, wf]
    cols.permute(&[0, 2, 1]).reshape(&[h, wf, c, 2])
}

/// `irfft2(act(rfft2(x) * W1) * W2)` with an arbitrary activation, used to
/// probe the transform pair in isolation.
pub fn fourier_gate_with<'g, T: Float>(
    x: Var<'g, T>,
    w1: Var<'g, T>,
    w2: Var<'g, T>,
    act: impl Fn(Var<'g, T>) -> Var<'g, T>,
) -> Var<'g, T> {
    let w = x.shape()[2];
    let spec = rfft2(x);
    let mid = act(complex_mul(spec, w1));
    irfft2(complex_mul(mid, w2), w)
}

/// Fourier gate with GELU applied to real and imaginary parts.
pub fn fourier_gate<'g, T: Float>(x: Var<'g, T>, w1: Var<'g, T>, w2: Var<'g, T>) -> Var<'g, T> {
    fourier_gate_with(x, w1, w2, |v| v.gelu())
}
