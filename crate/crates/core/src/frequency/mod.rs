//! Wavelet analysis/synthesis, Fourier-domain gating and the frequency
//! enhancement module built from them.

mod fem;
mod fourier;
mod wavelet;

pub use fem::{gated_residual, subband_refine, Fem, FemLevel, FEM_LEVELS};
pub use fourier::{complex_mul, fourier_gate, fourier_gate_with, irfft2, resample_spectrum, rfft2};
pub use wavelet::{dwt2, haar_analysis, haar_synthesis, iwt2};
