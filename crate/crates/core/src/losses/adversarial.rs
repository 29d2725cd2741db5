use hsicolor_autograd::{Float, Graph, Var};

/// Mean sigmoid cross-entropy of logits against a constant 0/1 target.
pub fn bce_with_logits<'g, T: Float>(z: Var<'g, T>, target_real: bool) -> Var<'g, T> {
    let z = if target_real { z.neg() } else { z };
    z.softplus().mean_all()
}

/// Logits of both discriminators for one image.
#[derive(Clone, Debug)]
pub struct DiscScores<'g, T: Float> {
    /// Patch score map `[N, h, w, 1]`.
    pub patch: Var<'g, T>,
    /// Statistic-head logits, each `[N, 1]`.
    pub stats: Vec<Var<'g, T>>,
}

impl<'g, T: Float> DiscScores<'g, T> {
    fn stats_cat(&self, g: &'g Graph<T>) -> Var<'g, T> {
        g.concat(&self.stats, 1)
    }
}

/// Discriminator objective: real-vs-fake cross-entropy of each branch, the
/// patch map and the statistic logits each averaged, branches summed.
pub fn discriminator_loss<'g, T: Float>(g: &'g Graph<T>, real: &DiscScores<'g, T>, fake: &DiscScores<'g, T>) -> Var<'g, T> {
    let patch = bce_with_logits(real.patch, true).add(bce_with_logits(fake.patch, false));
    let stats = bce_with_logits(real.stats_cat(g), true).add(bce_with_logits(fake.stats_cat(g), false));
    patch.add(stats)
}

/// Non-saturating generator objective `-log D(fake)` over both branches.
pub fn generator_adv_loss<'g, T: Float>(g: &'g Graph<T>, fake: &DiscScores<'g, T>) -> Var<'g, T> {
    bce_with_logits(fake.patch, true).add(bce_with_logits(fake.stats_cat(g), true))
}
