use hsicolor_autograd::{impl_module, Conv2dSpec, Float, Graph, Param, Tensor, Var};

use super::{dwt2, fourier_gate, iwt2, resample_spectrum};
use crate::error::{ensure, Result};
use crate::nn::{constant_param, Conv2d, DepthwiseConv};

pub const FEM_LEVELS: usize = 3;

/// Parameters of one decomposition level.
pub struct FemLevel<T: Float> {
    /// 3x3 depthwise, dilation 2, over the four concatenated sub-bands.
    pub refine_dw: DepthwiseConv<T>,
    pub refine_pw: Conv2d<T>,
    /// Complex spectral weights `[H_i, W_i/2 + 1, C, 2]`.
    pub w1: Param<T>,
    pub w2: Param<T>,
    pub beta: Param<T>,
    /// Spatial width the spectral weights were laid out for.
    pub spectral_width: usize,
}

impl_module!(FemLevel { refine_dw, refine_pw, w1, w2, beta });

impl<T: Float> FemLevel<T> {
    pub fn new(c: usize, h: usize, w: usize, rng: &mut dyn rand::RngCore) -> Self {
        let wf = w / 2 + 1;
        let spectral = |mean_re: f64, std: f64, rng: &mut dyn rand::RngCore| {
            let mut t = Tensor::randn(&[h, wf, c, 2], std, rng);
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                if i % 2 == 0 {
                    *v += T::lit(mean_re);
                }
            }
            Param::new(t)
        };
        Self {
            refine_dw: DepthwiseConv::new(4 * c, 3, Conv2dSpec::default().padding(2).dilation(2), rng),
            refine_pw: Conv2d::pointwise(4 * c, 4 * c, true, rng),
            w1: spectral(1.0, 0.02, rng),
            w2: spectral(0.0, 0.02, rng),
            beta: constant_param(&[1], 0.1),
            spectral_width: w,
        }
    }

    /// Depthwise delta kernel and identity mixing.
    pub fn set_identity_refine(&mut self) {
        self.refine_dw.set_delta();
        let c4 = self.refine_pw.cin();
        let w = self.refine_pw.weight.value_mut();
        w.data_mut().fill(T::zero());
        for ch in 0..c4 {
            w.set(&[0, 0, ch, ch], T::one());
        }
        if let Some(b) = &mut self.refine_pw.bias {
            b.value_mut().data_mut().fill(T::zero());
        }
    }

    pub fn zero_spectral(&mut self) {
        self.w1.value_mut().data_mut().fill(T::zero());
        self.w2.value_mut().data_mut().fill(T::zero());
    }
}

/// Dilated depthwise-separable refinement of the four sub-bands of one level.
pub fn subband_refine<'g, T: Float>(
    g: &'g Graph<T>,
    bands: [Var<'g, T>; 4],
    level: &FemLevel<T>,
) -> [Var<'g, T>; 4] {
    let c = bands[0].shape()[3];
    let cat = g.concat(&bands, 3);
    let out = level.refine_pw.forward(g, level.refine_dw.forward(g, cat));
    [0, 1, 2, 3].map(|k| out.narrow(3, k * c, c))
}

/// `ll + (2 sigmoid(beta * y) - 1) * y`.
pub fn gated_residual<'g, T: Float>(ll: Var<'g, T>, y: Var<'g, T>, beta: Var<'g, T>) -> Var<'g, T> {
    let gate = y.mul(beta).sigmoid().mul_scalar(T::lit(2.0)).add_scalar(-T::one());
    ll.add(gate.mul(y))
}

/// Frequency enhancement: multi-level Haar analysis, per-level refinement and
/// Fourier gating of the low band, bottom-up synthesis, residual shortcut.
pub struct Fem<T: Float> {
    pub levels: Vec<FemLevel<T>>,
    pub shortcut: Conv2d<T>,
}

impl_module!(Fem { levels, shortcut });

impl<T: Float> Fem<T> {
    /// `h x w` is the feature size the spectral weights are laid out for;
    /// other sizes are served by resampling the weights.
    pub fn new(c: usize, h: usize, w: usize, rng: &mut dyn rand::RngCore) -> Self {
        assert!(
            h % (1 << FEM_LEVELS) == 0 && w % (1 << FEM_LEVELS) == 0,
            "FEM base size {h}x{w} must be divisible by {}",
            1 << FEM_LEVELS
        );
        let levels = (1..=FEM_LEVELS)
            .map(|i| FemLevel::new(c, h >> i, w >> i, rng))
            .collect();
        Self {
            levels,
            shortcut: Conv2d::pointwise(c, c, true, rng),
        }
    }

    /// Identity refinement, zero spectral weights and a zero shortcut: the
    /// module then reproduces its input.
    pub fn set_identity(&mut self) {
        for l in &mut self.levels {
            l.set_identity_refine();
            l.zero_spectral();
        }
        self.shortcut.set_zero();
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let s = x.shape();
        let n_lv = self.levels.len();
        let m = 1 << n_lv;
        ensure!(
            s[1] % m == 0 && s[2] % m == 0,
            "FEM input {}x{} is not divisible by {m}",
            s[1],
            s[2]
        );
        // analysis along the raw LL chain
        let mut raw_ll = vec![x];
        let mut bands = Vec::with_capacity(n_lv);
        for _ in 0..n_lv {
            let b = dwt2(*raw_ll.last().unwrap())?;
            raw_ll.push(b[0]);
            bands.push(b);
        }
        // refinement and gating per level
        let mut enhanced = Vec::with_capacity(n_lv);
        for (level, b) in self.levels.iter().zip(bands) {
            let [ll, lh, hl, hh] = subband_refine(g, b, level);
            let (h, w) = (ll.shape()[1], ll.shape()[2]);
            let w1 = resample_spectrum(g, g.param(&level.w1), level.spectral_width, h, w);
            let w2 = resample_spectrum(g, g.param(&level.w2), level.spectral_width, h, w);
            let y = fourier_gate(ll, w1, w2);
            let ll_hat = gated_residual(ll, y, g.param(&level.beta));
            enhanced.push([ll_hat, lh, hl, hh]);
        }
        // synthesis; the carry is the correction a deeper level made to the
        // low band of the level above it
        let mut carry: Option<Var<'g, T>> = None;
        let mut z0 = x;
        for i in (0..n_lv).rev() {
            let [ll_hat, lh, hl, hh] = enhanced[i];
            let low = match carry {
                Some(c) => ll_hat.add(c),
                None => ll_hat,
            };
            let rec = iwt2(g, low, lh, hl, hh)?;
            if i > 0 {
                carry = Some(rec.sub(raw_ll[i]));
            } else {
                z0 = rec;
            }
        }
        Ok(self.shortcut.forward(g, x).add(z0))
    }
}
