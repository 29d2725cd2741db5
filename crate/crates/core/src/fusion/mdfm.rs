use hsicolor_autograd::{impl_module, Float, Graph, Var};

use crate::error::{ensure, Result};
use crate::nn::{Conv2d, DsConv, ResBlock};

/// Fixed scale of the two input shortcuts.
pub const MDFM_SHORTCUT: f64 = 0.1;

/// Fuses a spatial-domain and a frequency-domain feature map with per-channel
/// convex weights computed from their pooled statistics.
pub struct Mdfm<T: Float> {
    pub weights: DsConv<T>,
    pub proj: Conv2d<T>,
    pub refine: ResBlock<T>,
}

impl_module!(Mdfm { weights, proj, refine });

impl<T: Float> Mdfm<T> {
    pub fn new(c: usize, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            weights: DsConv::new(2 * c, 2 * c, 3, 1, rng),
            proj: Conv2d::pointwise(2 * c, c, false, rng),
            refine: ResBlock::new(c, rng),
        }
    }

    /// Per-channel weights `(theta, eps)`, each `[N, 1, 1, C]`, with
    /// `theta + eps = 1`.
    pub fn mix<'g>(&self, g: &'g Graph<T>, spa: Var<'g, T>, fre: Var<'g, T>) -> (Var<'g, T>, Var<'g, T>) {
        let c = spa.shape()[3];
        let pooled = g.concat(&[spa.mean_axes(&[1, 2], true), fre.mean_axes(&[1, 2], true)], 3);
        let logits = self.weights.forward(g, pooled);
        let d = logits.narrow(3, 0, c).sub(logits.narrow(3, c, c));
        // a two-way softmax is a sigmoid of the logit difference
        (d.sigmoid(), d.neg().sigmoid())
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, spa: Var<'g, T>, fre: Var<'g, T>) -> Result<Var<'g, T>> {
        ensure!(spa.shape() == fre.shape(), "fusion inputs differ: {:?} vs {:?}", spa.shape(), fre.shape());
        let (theta, eps) = self.mix(g, spa, fre);
        let cat = g.concat(&[spa.mul(theta), fre.mul(eps)], 3);
        let aligned = self.refine.forward(g, self.proj.forward(g, cat));
        let k = T::lit(MDFM_SHORTCUT);
        Ok(aligned.add(spa.add(fre).mul_scalar(k)))
    }
}
