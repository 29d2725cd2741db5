use hsicolor_autograd::{impl_module, Float, Graph, Var};

use crate::nn::{Conv2d, Linear};

pub const CBAM_REDUCTION: usize = 8;
pub const CBAM_SPATIAL_KERNEL: usize = 7;
/// Narrowest hidden layer of the channel MLP; a single ReLU unit can start dead.
pub const CBAM_MIN_HIDDEN: usize = 4;
/// Logit at which a sigmoid rounds to exactly 1 in both f32 and f64.
const SATURATING_LOGIT: f64 = 40.0;

/// Channel attention (shared MLP over average- and max-pooled descriptors)
/// followed by spatial attention (7x7 conv over channel mean/max maps).
pub struct Cbam<T: Float> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub spatial: Conv2d<T>,
}

impl_module!(Cbam { fc1, fc2, spatial });

impl<T: Float> Cbam<T> {
    pub fn new(c: usize, rng: &mut dyn rand::RngCore) -> Self {
        let hidden = (c / CBAM_REDUCTION).max(CBAM_MIN_HIDDEN.min(c));
        Self {
            fc1: Linear::new(c, hidden, true, rng),
            fc2: Linear::new(hidden, c, true, rng),
            spatial: Conv2d::same(2, 1, CBAM_SPATIAL_KERNEL, rng),
        }
    }

    /// Zero weights and biases: both gates become 0.5.
    pub fn set_zero(&mut self) {
        for p in [&mut self.fc1.weight, &mut self.fc2.weight, &mut self.spatial.weight] {
            p.value_mut().data_mut().fill(T::zero());
        }
        for b in [&mut self.fc1.bias, &mut self.fc2.bias, &mut self.spatial.bias].into_iter().flatten() {
            b.value_mut().data_mut().fill(T::zero());
        }
    }

    /// Saturates both gates so the module passes its input through unchanged.
    pub fn set_open(&mut self) {
        self.set_zero();
        let half = T::lit(SATURATING_LOGIT / 2.0);
        self.fc2.bias.as_mut().unwrap().value_mut().data_mut().fill(half);
        self.spatial
            .bias
            .as_mut()
            .unwrap()
            .value_mut()
            .data_mut()
            .fill(T::lit(SATURATING_LOGIT));
    }

    /// Channel mask `[N, 1, 1, C]`.
    pub fn channel_mask<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let s = x.shape();
        let flat = x.reshape(&[s[0], s[1] * s[2], s[3]]);
        let avg = flat.mean_axes(&[1], false);
        let max = flat.max_axis(1, false);
        let mlp = |v: Var<'g, T>| self.fc2.forward(g, self.fc1.forward(g, v).relu());
        mlp(avg).add(mlp(max)).sigmoid().reshape(&[s[0], 1, 1, s[3]])
    }

    /// Spatial mask `[N, H, W, 1]`.
    pub fn spatial_mask<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let maps = g.concat(&[x.mean_axes(&[3], true), x.max_axis(3, true)], 3);
        self.spatial.forward(g, maps).sigmoid()
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let xc = x.mul(self.channel_mask(g, x));
        xc.mul(self.spatial_mask(g, xc))
    }
}
