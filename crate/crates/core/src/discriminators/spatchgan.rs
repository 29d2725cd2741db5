use hsicolor_autograd::{impl_module, Conv2dSpec, Float, Graph, PadMode, Var};

use super::DiscriminatorConfig;
use crate::nn::{Conv2d, Linear};

pub const SPATCH_SCALES: usize = 3;
const SLOPE: f64 = 0.2;

/// Per-channel spatial mean and standard deviation of `[N, H, W, C]`, each
/// `[N, C]`. Values are centred on the first pixel before the variance pass,
/// so a constant map has a spread of exactly zero.
pub fn feature_stats<'g, T: Float>(x: Var<'g, T>) -> (Var<'g, T>, Var<'g, T>) {
    let s = x.shape();
    let flat = x.reshape(&[s[0], s[1] * s[2], s[3]]);
    let mean = flat.mean_axes(&[1], false);
    let d = flat.sub(flat.narrow(1, 0, 1));
    let var = d.sub(d.mean_axes(&[1], true)).square().mean_axes(&[1], false);
    (mean, var.sqrt())
}

/// Two-layer MLP mapping one statistic vector to a logit.
pub struct StatHead<T: Float> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl_module!(StatHead { fc1, fc2 });

impl<T: Float> StatHead<T> {
    fn new(c: usize, hidden: usize, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            fc1: Linear::new(c, hidden, true, rng),
            fc2: Linear::new(hidden, 1, true, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, v: Var<'g, T>) -> Var<'g, T> {
        self.fc2.forward(g, self.fc1.forward(g, v).leaky_relu(T::lit(SLOPE)))
    }
}

pub struct SPatchOutput<'g, T: Float> {
    /// `[N, 1]` logits, mean head then std head for each scale.
    pub logits: Vec<Var<'g, T>>,
    pub means: Vec<Var<'g, T>>,
    pub stds: Vec<Var<'g, T>>,
}

/// A conv backbone whose features at three scales are summarised by their
/// mean and standard deviation, each scored by its own head.
pub struct SPatchGan<T: Float> {
    pub stem: Conv2d<T>,
    pub stages: Vec<Conv2d<T>>,
    pub heads: Vec<StatHead<T>>,
}

impl_module!(SPatchGan { stem, stages, heads });

impl<T: Float> SPatchGan<T> {
    pub fn new(cin: usize, cfg: &DiscriminatorConfig, rng: &mut dyn rand::RngCore) -> Self {
        let pad = if cfg.circular { PadMode::Circular } else { PadMode::Zeros };
        let w = cfg.stats_width;
        let stem = Conv2d::new(cin, w, 3, Conv2dSpec::same(3).pad_mode(pad), true, rng);
        let spec = Conv2dSpec::default().stride(2).padding(1).pad_mode(pad);
        let stages: Vec<_> = (0..SPATCH_SCALES).map(|i| Conv2d::new(w << i, w << (i + 1), 4, spec, true, rng)).collect();
        let heads = (0..SPATCH_SCALES)
            .flat_map(|i| [w << (i + 1); 2])
            .map(|c| StatHead::new(c, cfg.head_hidden, rng))
            .collect();
        Self { stem, stages, heads }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, img: Var<'g, T>) -> SPatchOutput<'g, T> {
        let slope = T::lit(SLOPE);
        let mut x = self.stem.forward(g, img).leaky_relu(slope);
        let mut out = SPatchOutput {
            logits: Vec::new(),
            means: Vec::new(),
            stds: Vec::new(),
        };
        for (i, conv) in self.stages.iter().enumerate() {
            x = conv.forward(g, x).leaky_relu(slope);
            let (m, s) = feature_stats(x);
            out.logits.push(self.heads[2 * i].forward(g, m));
            out.logits.push(self.heads[2 * i + 1].forward(g, s));
            out.means.push(m);
            out.stds.push(s);
        }
        out
    }
}
