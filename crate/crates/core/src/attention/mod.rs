//! Local attention: CBAM, deformable convolution, attention sparsification and
//! the local branch that combines them.

mod asm;
mod cbam;
mod deform;
mod dgm;

pub use asm::{decompose, AsmBranch, AsmMasks, AsmStage, SPARSE_STAGES};
pub use cbam::{Cbam, CBAM_MIN_HIDDEN, CBAM_REDUCTION, CBAM_SPATIAL_KERNEL};
pub use deform::{deform_conv2d, DcnBranch, DeformConv, DCN_STAGES, DEFORM_KERNEL};
pub use dgm::Dgm;
