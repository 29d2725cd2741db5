//! Selective-scan recurrence, the four-direction visual state-space block and
//! the grouped spectral branch.

mod scan;
mod spectral;
mod vssm;

pub use scan::{selective_scan, selective_scan_unchecked, ScanInputs};
pub use spectral::{SpectralBranch, SPECTRAL_GROUP};
pub use vssm::{ScanDirection, ScanOrder, Vssm, D_STATE};

/// `-softplus(raw)`, the diagonal state matrix parameterisation.
pub fn negative_softplus<'g, T: hsicolor_autograd::Float>(raw: hsicolor_autograd::Var<'g, T>) -> hsicolor_autograd::Var<'g, T> {
    raw.softplus().neg()
}

/// Inverse of softplus, used to initialise raw parameters from target values.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 20.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}
