//! Attention sparsification: a channel mask and a spatial mask split a feature
//! map into four complementary parts, which a 1x1 conv fuses back.

use hsicolor_autograd::{impl_module, Float, Graph, Var};

use crate::nn::Conv2d;

use super::Cbam;

/// Channel mask `[N, 1, 1, C]` and spatial mask `[N, H, W, 1]`, both in (0, 1).
#[derive(Clone, Copy, Debug)]
pub struct AsmMasks<'g, T: Float> {
    pub channel: Var<'g, T>,
    pub spatial: Var<'g, T>,
}

/// Splits `f` into `(f*m, f*(1-m))` such that the two parts add back to `f`
/// exactly: the masked part is recomputed as `f - (f - f*m)`, and one of the
/// two subtractions is always exact.
fn split<'g, T: Float>(f: Var<'g, T>, m: Var<'g, T>) -> (Var<'g, T>, Var<'g, T>) {
    let rest = f.sub(f.mul(m));
    (f.sub(rest), rest)
}

/// Splits `f` into `f*mc*ms`, `f*mc*(1-ms)`, `f*(1-mc)*ms`, `f*(1-mc)*(1-ms)`.
/// `(p1 + p2) + (p3 + p4)` reproduces `f` bitwise.
pub fn decompose<'g, T: Float>(f: Var<'g, T>, masks: AsmMasks<'g, T>) -> [Var<'g, T>; 4] {
    let (a, b) = split(f, masks.channel);
    let (p1, p2) = split(a, masks.spatial);
    let (p3, p4) = split(b, masks.spatial);
    [p1, p2, p3, p4]
}

/// One mask-decompose-fuse step.
pub struct AsmStage<T: Float> {
    pub channel: Conv2d<T>,
    pub spatial: Conv2d<T>,
    pub fuse: Conv2d<T>,
}

impl_module!(AsmStage { channel, spatial, fuse });

impl<T: Float> AsmStage<T> {
    pub fn new(c: usize, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            channel: Conv2d::pointwise(c, c, true, rng),
            spatial: Conv2d::pointwise(c, 1, true, rng),
            fuse: Conv2d::pointwise(4 * c, c, true, rng),
        }
    }

    pub fn masks<'g>(&self, g: &'g Graph<T>, f: Var<'g, T>) -> AsmMasks<'g, T> {
        let gap = f.mean_axes(&[1, 2], true);
        AsmMasks {
            channel: self.channel.forward(g, gap).sigmoid(),
            spatial: self.spatial.forward(g, f).sigmoid(),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, f: Var<'g, T>) -> Var<'g, T> {
        let parts = decompose(f, self.masks(g, f));
        self.fuse.forward(g, g.concat(&parts, 3))
    }
}

pub const SPARSE_STAGES: usize = 3;

/// CBAM, an initial decomposition, then three sparsification stages whose
/// outputs are concatenated and fused.
pub struct AsmBranch<T: Float> {
    pub cbam: Cbam<T>,
    pub first: AsmStage<T>,
    pub stages: Vec<AsmStage<T>>,
    pub fuse: Conv2d<T>,
}

impl_module!(AsmBranch { cbam, first, stages, fuse });

impl<T: Float> AsmBranch<T> {
    pub fn new(c: usize, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            cbam: Cbam::new(c, rng),
            first: AsmStage::new(c, rng),
            stages: (0..SPARSE_STAGES).map(|_| AsmStage::new(c, rng)).collect(),
            fuse: Conv2d::pointwise(SPARSE_STAGES * c, c, true, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let mut f = self.first.forward(g, self.cbam.forward(g, x));
        let mut outs = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            f = s.forward(g, f);
            outs.push(f);
        }
        self.fuse.forward(g, g.concat(&outs, 3))
    }
}
