use hsicolor_autograd::{impl_module, Float, Graph, Var};

use crate::nn::DsConv;

use super::{AsmBranch, DcnBranch};

/// Local branch: a projected input feeds a deformable branch and a
/// sparsification branch; their concatenation is mixed by a separable conv.
/// Either branch can be disabled; at least one must remain.
pub struct Dgm<T: Float> {
    pub proj: DsConv<T>,
    pub dcn: Option<DcnBranch<T>>,
    pub asm: Option<AsmBranch<T>>,
    pub out: DsConv<T>,
}

impl_module!(Dgm { proj, dcn, asm, out });

impl<T: Float> Dgm<T> {
    pub fn new(c: usize, use_dcn: bool, use_asm: bool, rng: &mut dyn rand::RngCore) -> Self {
        assert!(use_dcn || use_asm, "local branch needs the DCN or the ASM path");
        let proj = DsConv::new(c, c, 3, 1, rng);
        let dcn = use_dcn.then(|| DcnBranch::new(c, rng));
        let asm = use_asm.then(|| AsmBranch::new(c, rng));
        let branches = usize::from(use_dcn) + usize::from(use_asm);
        Self {
            proj,
            dcn,
            asm,
            out: DsConv::new(branches * c, c, 3, 1, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let p = self.proj.forward(g, x);
        let mut parts = Vec::with_capacity(2);
        if let Some(d) = &self.dcn {
            parts.push(d.forward(g, p));
        }
        if let Some(a) = &self.asm {
            parts.push(a.forward(g, p));
        }
        let h = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 3) };
        self.out.forward(g, h)
    }
}
