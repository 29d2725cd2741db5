use hsicolor_autograd::{impl_module, Float, Graph, Param, Tensor, Var};

use super::{negative_softplus, selective_scan_unchecked, softplus_inverse, ScanInputs, D_STATE};
use crate::attention::Cbam;
use crate::nn::{constant_param, GroupNorm, ResBlock};

pub const SPECTRAL_GROUP: usize = 8;

/// Treats the channels of every pixel as short spectral sequences (one per
/// group of `SPECTRAL_GROUP` channels) and scans them with scalar tokens.
/// Scan parameters are shared by all groups.
pub struct SpectralBranch<T: Float> {
    pub group: usize,
    /// Token to step size: `softplus(dt_w * u + dt_b)`.
    pub dt_w: Param<T>,
    pub dt_b: Param<T>,
    /// Token to input/output projections: `u * w + b`, each `[N]`.
    pub b_w: Param<T>,
    pub b_b: Param<T>,
    pub c_w: Param<T>,
    pub c_b: Param<T>,
    pub a_raw: Param<T>,
    pub d: Param<T>,
    pub norm: GroupNorm<T>,
    pub cbam: Cbam<T>,
    pub conv: ResBlock<T>,
    channels: usize,
}

impl_module!(SpectralBranch { dt_w, dt_b, b_w, b_b, c_w, c_b, a_raw, d, norm, cbam, conv });

impl<T: Float> SpectralBranch<T> {
    pub fn new(c: usize, rng: &mut dyn rand::RngCore) -> Self {
        let group = SPECTRAL_GROUP;
        let padded = c.div_ceil(group) * group;
        let a: Vec<f64> = (0..D_STATE).map(|i| softplus_inverse((i + 1) as f64)).collect();
        Self {
            group,
            dt_w: Param::new(Tensor::randn(&[1], 0.1, rng)),
            dt_b: constant_param(&[1], softplus_inverse(0.5)),
            b_w: Param::new(Tensor::randn(&[D_STATE], 1.0, rng)),
            b_b: Param::new(Tensor::randn(&[D_STATE], 0.1, rng)),
            c_w: Param::new(Tensor::randn(&[D_STATE], (D_STATE as f64).powf(-0.5), rng)),
            c_b: Param::new(Tensor::randn(&[D_STATE], 0.1, rng)),
            a_raw: Param::new(Tensor::from_f64(&[1, D_STATE], &a)),
            d: constant_param(&[1], 1.0),
            norm: GroupNorm::new(padded / group, padded),
            cbam: Cbam::new(c, rng),
            conv: ResBlock::new(c, rng),
            channels: c,
        }
    }

    /// Scan that reproduces its input: zero output projection, unit skip.
    pub fn set_identity_scan(&mut self) {
        self.c_w.value_mut().data_mut().fill(T::zero());
        self.c_b.value_mut().data_mut().fill(T::zero());
        self.d.value_mut().data_mut().fill(T::one());
    }

    /// Spectral scan, normalisation and SiLU, before recalibration.
    pub fn scan_features<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let s = x.shape();
        let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
        assert_eq!(c, self.channels, "spectral branch built for {} channels, got {c}", self.channels);
        let padded = c.div_ceil(self.group) * self.group;
        let xp = if padded > c {
            g.concat(&[x, g.constant(Tensor::zeros(&[n, h, w, padded - c]))], 3)
        } else {
            x
        };
        let seqs = n * h * w * (padded / self.group);
        let u = xp.reshape(&[seqs, self.group, 1]);
        let delta = u.mul(g.param(&self.dt_w)).add(g.param(&self.dt_b)).softplus();
        let bm = u.mul(g.param(&self.b_w)).add(g.param(&self.b_b));
        let cm = u.mul(g.param(&self.c_w)).add(g.param(&self.c_b));
        let y = selective_scan_unchecked(ScanInputs {
            u,
            delta,
            a: negative_softplus(g.param(&self.a_raw)),
            b: bm,
            c: cm,
            d: g.param(&self.d),
        });
        let y = self.norm.forward(g, y.reshape(&[n, h, w, padded])).silu();
        if padded > c {
            y.narrow(3, 0, c)
        } else {
            y
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let y = self.scan_features(g, x);
        self.conv.forward(g, self.cbam.forward(g, y))
    }
}
