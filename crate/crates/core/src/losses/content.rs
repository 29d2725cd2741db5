use hsicolor_autograd::{impl_module, set_trainable, Conv2dSpec, Float, Graph, PadMode, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::metrics::{luma, ssim_map_mean};
use crate::error::{ensure, Result};
use crate::frequency::rfft2;
use crate::nn::{rng_from_seed, Conv2d};

/// Added under square roots so magnitudes stay differentiable at zero.
pub const MAGNITUDE_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContentWeights {
    pub pix: f64,
    pub per: f64,
    pub edge: f64,
    pub fft: f64,
    pub ssim: f64,
    pub tv: f64,
}

impl Default for ContentWeights {
    fn default() -> Self {
        Self {
            pix: 10.0,
            per: 10.0,
            edge: 1.0,
            fft: 1.0,
            ssim: 1.0,
            tv: 1.0,
        }
    }
}

impl ContentWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.pix, self.per, self.edge, self.fft, self.ssim, self.tv];
        ensure!(all.iter().all(|w| w.is_finite() && *w >= 0.0), "content weights must be finite and non-negative");
        Ok(())
    }
}

/// Unweighted content terms.
#[derive(Clone, Copy, Debug)]
pub struct ContentTerms<'g, T: Float> {
    pub pix: Var<'g, T>,
    pub per: Var<'g, T>,
    pub edge: Var<'g, T>,
    pub fft: Var<'g, T>,
    pub ssim: Var<'g, T>,
    pub tv: Var<'g, T>,
}

impl<'g, T: Float> ContentTerms<'g, T> {
    pub fn weighted(&self, w: &ContentWeights) -> Var<'g, T> {
        let terms = [
            (self.pix, w.pix),
            (self.per, w.per),
            (self.edge, w.edge),
            (self.fft, w.fft),
            (self.ssim, w.ssim),
            (self.tv, w.tv),
        ];
        let mut total = terms[0].0.mul_scalar(T::lit(terms[0].1));
        for &(v, k) in &terms[1..] {
            total = total.add(v.mul_scalar(T::lit(k)));
        }
        total
    }

    pub fn values(&self) -> [(&'static str, f64); 6] {
        let v = |x: Var<'g, T>| x.value().item().to_f64().unwrap_or(f64::NAN);
        [
            ("pix", v(self.pix)),
            ("per", v(self.per)),
            ("edge", v(self.edge)),
            ("fft", v(self.fft)),
            ("ssim", v(self.ssim)),
            ("tv", v(self.tv)),
        ]
    }
}

/// Frozen feature stack for the perceptual term.
pub trait FeatureExtractor<T: Float> {
    fn features<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Vec<Var<'g, T>>;
}

pub const PERCEPTUAL_SEED: u64 = 0x5EED_0F_FEA7;
const PERCEPTUAL_WIDTHS: [usize; 3] = [16, 32, 32];

/// Randomly initialised, frozen conv stack: 3x3 convs with ReLU, the second
/// one strided.
pub struct RandomFeatures<T: Float> {
    pub convs: Vec<Conv2d<T>>,
}

impl_module!(RandomFeatures { convs });

impl<T: Float> RandomFeatures<T> {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut prev = 3;
        let convs = PERCEPTUAL_WIDTHS
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let spec = Conv2dSpec::same(3).stride(if i == 1 { 2 } else { 1 });
                let c = Conv2d::new(prev, w, 3, spec, true, &mut rng);
                prev = w;
                c
            })
            .collect();
        let mut f = Self { convs };
        set_trainable(&mut f, false);
        f
    }
}

impl<T: Float> Default for RandomFeatures<T> {
    fn default() -> Self {
        Self::new(PERCEPTUAL_SEED)
    }
}

impl<T: Float> FeatureExtractor<T> for RandomFeatures<T> {
    fn features<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Vec<Var<'g, T>> {
        let mut out = Vec::with_capacity(self.convs.len());
        let mut h = x;
        for c in &self.convs {
            h = c.forward(g, h).relu();
            out.push(h);
        }
        out
    }
}

/// Sobel gradient magnitude per channel. Reflect padding keeps a constant
/// image edge-free up to the border.
pub fn sobel_magnitude<'g, T: Float>(g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
    let c = x.shape()[3];
    let kx = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
    let ky = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
    let kernel = |k: &[f64; 9]| {
        let data: Vec<f64> = k.iter().flat_map(|&v| std::iter::repeat_n(v, c)).collect();
        g.constant(Tensor::from_f64(&[3, 3, c], &data))
    };
    let p = x.pad_spatial(1, 1, 1, 1, PadMode::Reflect);
    let gx = p.depthwise_conv2d(kernel(&kx), None, Conv2dSpec::default());
    let gy = p.depthwise_conv2d(kernel(&ky), None, Conv2dSpec::default());
    gx.square().add(gy.square()).add_scalar(T::lit(MAGNITUDE_EPS)).sqrt()
}

/// Orthonormal 2-D DFT amplitude as a half spectrum `[N, H, W/2+1, C]`.
pub fn dft_amplitude<'g, T: Float>(x: Var<'g, T>) -> Var<'g, T> {
    let s = x.shape();
    let spec = rfft2(x);
    let power = spec.square().sum_axes(&[4], false);
    power
        .add_scalar(T::lit(MAGNITUDE_EPS))
        .sqrt()
        .mul_scalar(T::lit(1.0 / ((s[1] * s[2]) as f64).sqrt()))
}

/// Mean absolute amplitude difference over the full spectrum, computed from
/// half spectra with each non-self-conjugate column counted twice.
pub fn fft_l1<'g, T: Float>(g: &'g Graph<T>, a: Var<'g, T>, b: Var<'g, T>) -> Var<'g, T> {
    let s = a.shape();
    let w = s[2];
    let wf = w / 2 + 1;
    let weights: Vec<f64> = (0..wf).map(|l| if l == 0 || 2 * l == w { 1.0 } else { 2.0 }).collect();
    let cw = g.constant(Tensor::from_f64(&[1, 1, wf, 1], &weights));
    let diff = dft_amplitude(a).sub(dft_amplitude(b)).abs().mul(cw);
    diff.sum_all().mul_scalar(T::lit(1.0 / (s[0] * s[1] * s[2] * s[3]) as f64))
}

/// Anisotropic total variation: mean absolute vertical plus mean absolute
/// horizontal neighbour difference.
pub fn total_variation<'g, T: Float>(x: Var<'g, T>) -> Var<'g, T> {
    let s = x.shape();
    let dv = x.narrow(1, 1, s[1] - 1).sub(x.narrow(1, 0, s[1] - 1));
    let dh = x.narrow(2, 1, s[2] - 1).sub(x.narrow(2, 0, s[2] - 1));
    dv.abs().mean_all().add(dh.abs().mean_all())
}

/// Content terms for images in `[-1, 1]`. The SSIM term uses the luma of the
/// images mapped to `[0, 1]`.
pub fn content_terms<'g, T: Float>(
    g: &'g Graph<T>,
    pred: Var<'g, T>,
    gt: Var<'g, T>,
    features: &dyn FeatureExtractor<T>,
) -> Result<ContentTerms<'g, T>> {
    let s = pred.shape();
    ensure!(s == gt.shape(), "prediction {s:?} and target {:?} differ", gt.shape());
    ensure!(s.len() == 4 && s[3] == 3, "content loss expects [N, H, W, 3], got {s:?}");
    ensure!(s[1] >= 3 && s[2] >= 3, "content loss needs at least 3x3, got {s:?}");
    let fp = features.features(g, pred);
    let fg = features.features(g, gt);
    let mut per = fp[0].sub(fg[0]).abs().mean_all();
    for (a, b) in fp.iter().zip(&fg).skip(1) {
        per = per.add(a.sub(*b).abs().mean_all());
    }
    let per = per.mul_scalar(T::lit(1.0 / fp.len() as f64));
    let half = T::lit(0.5);
    let unit = |x: Var<'g, T>| x.add_scalar(T::one()).mul_scalar(half);
    let ssim = ssim_map_mean(g, luma(g, unit(pred)), luma(g, unit(gt)), 1.0);
    Ok(ContentTerms {
        pix: pred.sub(gt).abs().mean_all(),
        per,
        edge: sobel_magnitude(g, pred).sub(sobel_magnitude(g, gt)).abs().mean_all(),
        fft: fft_l1(g, pred, gt),
        ssim: ssim.neg().add_scalar(T::one()),
        tv: total_variation(pred),
    })
}
