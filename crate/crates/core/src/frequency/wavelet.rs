use hsicolor_autograd::{Float, Graph, Tensor, Var};

use crate::error::{ensure, Result};

/// Orthonormal Haar analysis of an NHWC buffer. Output is `[N, H/2, W/2, 4C]`
/// with channel blocks `[LL, LH, HL, HH]`.
pub fn haar_analysis<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let (h2, w2) = (h / 2, w / 2);
    let half = T::lit(0.5);
    let src = x.data();
    let mut out = vec![T::zero(); n * h2 * w2 * 4 * c];
    for b in 0..n {
        for y in 0..h2 {
            for xx in 0..w2 {
                let top = ((b * h + 2 * y) * w + 2 * xx) * c;
                let bot = top + w * c;
                let o = ((b * h2 + y) * w2 + xx) * 4 * c;
                for ch in 0..c {
                    let (a, bb) = (src[top + ch], src[top + c + ch]);
                    let (cc, d) = (src[bot + ch], src[bot + c + ch]);
                    out[o + ch] = (a + bb + cc + d) * half;
                    out[o + c + ch] = (a + bb - cc - d) * half;
                    out[o + 2 * c + ch] = (a - bb + cc - d) * half;
                    out[o + 3 * c + ch] = (a - bb - cc + d) * half;
                }
            }
        }
    }
    Tensor::from_vec(&[n, h2, w2, 4 * c], out)
}

/// Inverse (and adjoint) of [`haar_analysis`].
pub fn haar_synthesis<T: Float>(bands: &Tensor<T>) -> Tensor<T> {
    let s = bands.shape();
    let (n, h2, w2, c4) = (s[0], s[1], s[2], s[3]);
    let c = c4 / 4;
    let (h, w) = (2 * h2, 2 * w2);
    let half = T::lit(0.5);
    let src = bands.data();
    let mut out = vec![T::zero(); n * h * w * c];
    for b in 0..n {
        for y in 0..h2 {
            for xx in 0..w2 {
                let i = ((b * h2 + y) * w2 + xx) * c4;
                let top = ((b * h + 2 * y) * w + 2 * xx) * c;
                let bot = top + w * c;
                for ch in 0..c {
                    let (ll, lh) = (src[i + ch], src[i + c + ch]);
                    let (hl, hh) = (src[i + 2 * c + ch], src[i + 3 * c + ch]);
                    out[top + ch] = (ll + lh + hl + hh) * half;
                    out[top + c + ch] = (ll + lh - hl - hh) * half;
                    out[bot + ch] = (ll - lh + hl - hh) * half;
                    out[bot + c + ch] = (ll - lh - hl + hh) * half;
                }
            }
        }
    }
    Tensor::from_vec(&[n, h, w, c], out)
}

fn analysis_op<'g, T: Float>(x: Var<'g, T>) -> Var<'g, T> {
    let out = haar_analysis(&x.value());
    x.graph()
        .op(out, &[x], |g, _| vec![Some(haar_synthesis(g))])
}

fn synthesis_op<'g, T: Float>(bands: Var<'g, T>) -> Var<'g, T> {
    let out = haar_synthesis(&bands.value());
    bands
        .graph()
        .op(out, &[bands], |g, _| vec![Some(haar_analysis(g))])
}

/// Single-level 2-D Haar transform: `(LL, LH, HL, HH)`, each `[N, H/2, W/2, C]`.
pub fn dwt2<'g, T: Float>(x: Var<'g, T>) -> Result<[Var<'g, T>; 4]> {
    let s = x.shape();
    ensure!(s.len() == 4, "dwt2 expects an NHWC map, got {s:?}");
    ensure!(
        s[1] % 2 == 0 && s[2] % 2 == 0,
        "dwt2 needs even spatial dims, got {}x{}",
        s[1],
        s[2]
    );
    let c = s[3];
    let all = analysis_op(x);
    Ok([0, 1, 2, 3].map(|k| all.narrow(3, k * c, c)))
}

pub fn iwt2<'g, T: Float>(
    g: &'g Graph<T>,
    ll: Var<'g, T>,
    lh: Var<'g, T>,
    hl: Var<'g, T>,
    hh: Var<'g, T>,
) -> Result<Var<'g, T>> {
    let s = ll.shape();
    ensure!(s.len() == 4, "iwt2 expects NHWC sub-bands, got {s:?}");
    for b in [lh, hl, hh] {
        ensure!(b.shape() == s, "sub-band shapes differ: {:?} vs {s:?}", b.shape());
    }
    Ok(synthesis_op(g.concat(&[ll, lh, hl, hh], 3)))
}
