use hsicolor_autograd::{impl_module, Float, Graph, Param, Var};

use super::{Ablation, Mdfm};
use crate::attention::Dgm;
use crate::error::Result;
use crate::frequency::Fem;
use crate::nn::{constant_param, LayerNorm, ResBlock};
use crate::state_space::{SpectralBranch, Vssm};

/// One path (global or local): a spatial operator, an optional frequency
/// enhancer on the same normalised input, and an optional fusion of the two.
pub struct PathFusion<T: Float> {
    pub fem: Option<Fem<T>>,
    pub mdfm: Option<Mdfm<T>>,
}

impl_module!(PathFusion { fem, mdfm });

impl<T: Float> PathFusion<T> {
    fn new(c: usize, h: usize, w: usize, flags: &Ablation, rng: &mut dyn rand::RngCore) -> Self {
        let fem = flags.use_fem.then(|| Fem::new(c, h, w, rng));
        // without a frequency input there is nothing to fuse
        let mdfm = (flags.use_fem && flags.use_mdfm).then(|| Mdfm::new(c, rng));
        Self { fem, mdfm }
    }

    fn forward<'g>(&self, g: &'g Graph<T>, spa: Var<'g, T>, normed: Var<'g, T>) -> Result<Var<'g, T>> {
        let Some(fem) = &self.fem else { return Ok(spa) };
        let fre = fem.forward(g, normed)?;
        match &self.mdfm {
            Some(m) => m.forward(g, spa, fre),
            None => Ok(spa.add(fre)),
        }
    }
}

/// Frequency-spatial block: a global state-space path and a local gated path
/// in residual form, a conv block, and a parallel spectral branch, combined
/// with learnable per-channel weights.
pub struct Fsb<T: Float> {
    pub norm_global: LayerNorm<T>,
    pub vssm: Vssm<T>,
    pub global: PathFusion<T>,
    pub alpha: Param<T>,
    pub norm_local: LayerNorm<T>,
    pub dgm: Option<Dgm<T>>,
    pub local: PathFusion<T>,
    pub beta: Param<T>,
    pub conv: ResBlock<T>,
    pub spectral: Option<SpectralBranch<T>>,
    pub w_spa: Param<T>,
    pub w_spe: Param<T>,
}

impl_module!(Fsb { norm_global, vssm, global, alpha, norm_local, dgm, local, beta, conv, spectral, w_spa, w_spe });

impl<T: Float> Fsb<T> {
    /// `h, w` is the feature size the frequency weights are laid out for.
    pub fn new(c: usize, h: usize, w: usize, flags: &Ablation, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            norm_global: LayerNorm::new(c),
            vssm: Vssm::new(c, rng),
            global: PathFusion::new(c, h, w, flags, rng),
            alpha: constant_param(&[1], 1.0),
            norm_local: LayerNorm::new(c),
            dgm: flags.use_dgm.then(|| Dgm::new(c, flags.use_dcn, flags.use_asm, rng)),
            local: PathFusion::new(c, h, w, flags, rng),
            beta: constant_param(&[1], 1.0),
            conv: ResBlock::new(c, rng),
            spectral: flags.use_spectral.then(|| SpectralBranch::new(c, rng)),
            w_spa: constant_param(&[c], 0.5),
            w_spe: constant_param(&[c], 0.5),
        }
    }

    pub fn global_path<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let n = self.norm_global.forward(g, x);
        let y = self.global.forward(g, self.vssm.forward(g, n), n)?;
        Ok(x.add(g.param(&self.alpha).mul(y)))
    }

    pub fn local_path<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let Some(dgm) = &self.dgm else { return Ok(x) };
        let n = self.norm_local.forward(g, x);
        let y = self.local.forward(g, dgm.forward(g, n), n)?;
        Ok(x.add(g.param(&self.beta).mul(y)))
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let local = self.local_path(g, self.global_path(g, x)?)?;
        let spa = self.conv.forward(g, local).mul(g.param(&self.w_spa));
        Ok(match &self.spectral {
            Some(s) => spa.add(s.forward(g, x).mul(g.param(&self.w_spe))),
            None => spa,
        })
    }

    /// Zero fusion weights: the block outputs zeros.
    pub fn set_zero(&mut self) {
        for p in [&mut self.w_spa, &mut self.w_spe] {
            p.value_mut().data_mut().fill(T::zero());
        }
    }
}
