use hsicolor_autograd::{impl_module, Conv2dSpec, Float, Graph, Var};

use crate::error::{ensure, Result};
use crate::nn::{instance_norm, Conv2d};

/// `(kernel, stride)` of every conv, the final 1-channel projection included.
pub const PATCH_LAYERS: [(usize, usize); 5] = [(4, 2), (4, 2), (4, 2), (4, 1), (4, 1)];
const SLOPE: f64 = 0.2;

/// Fully convolutional real/fake scorer over the concatenated cube and image.
pub struct PatchGan<T: Float> {
    pub stages: Vec<Conv2d<T>>,
    pub out: Conv2d<T>,
}

impl_module!(PatchGan { stages, out });

impl<T: Float> PatchGan<T> {
    pub fn new(cin: usize, width: usize, rng: &mut dyn rand::RngCore) -> Self {
        let widths = [width, 2 * width, 4 * width, 8 * width];
        let mut prev = cin;
        let stages = widths
            .iter()
            .zip(PATCH_LAYERS)
            .enumerate()
            .map(|(i, (&w, (k, s)))| {
                let spec = Conv2dSpec::default().stride(s).padding(1);
                // normalised stages do not need a bias
                let conv = Conv2d::new(prev, w, k, spec, i == 0, rng);
                prev = w;
                conv
            })
            .collect();
        let (k, s) = PATCH_LAYERS[4];
        Self {
            stages,
            out: Conv2d::new(prev, 1, k, Conv2dSpec::default().stride(s).padding(1), true, rng),
        }
    }

    /// Score-map side length for an input side length.
    pub fn output_size(n: usize) -> usize {
        PATCH_LAYERS.iter().fold(n, |n, &(k, s)| (n + 2 - k) / s + 1)
    }

    /// Logit map `[N, h, w, 1]`.
    pub fn forward<'g>(&self, g: &'g Graph<T>, cond: Var<'g, T>, img: Var<'g, T>) -> Result<Var<'g, T>> {
        let (cs, is) = (cond.shape(), img.shape());
        ensure!(
            cs.len() == 4 && is.len() == 4 && cs[..3] == is[..3],
            "condition {cs:?} and image {is:?} are not aligned"
        );
        ensure!(cs[1] >= 32 && cs[2] >= 32, "patch discriminator needs at least 32x32, got {cs:?}");
        let mut x = g.concat(&[cond, img], 3);
        for (i, conv) in self.stages.iter().enumerate() {
            x = conv.forward(g, x);
            if i > 0 {
                x = instance_norm(x);
            }
            x = x.leaky_relu(T::lit(SLOPE));
        }
        Ok(self.out.forward(g, x))
    }
}
