use hsicolor_autograd::{impl_module, Conv2dSpec, Float, Graph, Param, Tensor, Var};
use rand::Rng;

use super::{negative_softplus, selective_scan_unchecked, softplus_inverse, ScanInputs};
use crate::nn::{constant_param, init_weight, DepthwiseConv, LayerNorm, Linear};

pub const D_STATE: usize = 8;
const EXPAND: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanOrder {
    RowMajor,
    RowMajorReversed,
    ColumnMajor,
    ColumnMajorReversed,
}

impl ScanOrder {
    pub const ALL: [ScanOrder; 4] = [
        ScanOrder::RowMajor,
        ScanOrder::RowMajorReversed,
        ScanOrder::ColumnMajor,
        ScanOrder::ColumnMajorReversed,
    ];

    fn reversed(self) -> bool {
        matches!(self, ScanOrder::RowMajorReversed | ScanOrder::ColumnMajorReversed)
    }

    fn column(self) -> bool {
        matches!(self, ScanOrder::ColumnMajor | ScanOrder::ColumnMajorReversed)
    }

    /// `[N, H, W, E]` to the sequence `[N, H*W, E]` in this order.
    pub fn flatten<'g, T: Float>(self, x: Var<'g, T>) -> Var<'g, T> {
        let s = x.shape();
        let (n, h, w, e) = (s[0], s[1], s[2], s[3]);
        let seq = if self.column() {
            x.permute(&[0, 2, 1, 3]).reshape(&[n, h * w, e])
        } else {
            x.reshape(&[n, h * w, e])
        };
        if self.reversed() {
            let idx: Vec<usize> = (0..h * w).rev().collect();
            seq.index_select(1, &idx)
        } else {
            seq
        }
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten<'g, T: Float>(self, seq: Var<'g, T>, h: usize, w: usize) -> Var<'g, T> {
        let s = seq.shape();
        let (n, e) = (s[0], s[2]);
        let seq = if self.reversed() {
            let idx: Vec<usize> = (0..h * w).rev().collect();
            seq.index_select(1, &idx)
        } else {
            seq
        };
        if self.column() {
            seq.reshape(&[n, w, h, e]).permute(&[0, 2, 1, 3])
        } else {
            seq.reshape(&[n, h, w, e])
        }
    }
}

/// Input-dependent scan parameters for one traversal order.
pub struct ScanDirection<T: Float> {
    pub x_proj: Linear<T>,
    pub dt_proj: Linear<T>,
    pub a_raw: Param<T>,
    pub d: Param<T>,
}

impl_module!(ScanDirection { x_proj, dt_proj, a_raw, d });

impl<T: Float> ScanDirection<T> {
    pub fn new(e: usize, dt_rank: usize, rng: &mut dyn rand::RngCore) -> Self {
        let mut dt_proj = Linear::new(dt_rank, e, true, rng);
        *dt_proj.weight.value_mut() = Tensor::randn(&[dt_rank, e], (dt_rank as f64).powf(-0.5), rng);
        // step sizes start log-uniform in [1e-3, 1e-1]
        let bias: Vec<f64> = (0..e)
            .map(|_| {
                let dt = (rng.random_range(1e-3f64.ln()..1e-1f64.ln())).exp();
                softplus_inverse(dt)
            })
            .collect();
        *dt_proj.bias.as_mut().unwrap().value_mut() = Tensor::from_f64(&[e], &bias);
        // A = -(1, 2, ..., N) per channel
        let a: Vec<f64> = (0..e * D_STATE).map(|i| softplus_inverse((i % D_STATE + 1) as f64)).collect();
        Self {
            x_proj: Linear {
                weight: init_weight(&[e, dt_rank + 2 * D_STATE], e, 1.0, rng),
                bias: None,
            },
            dt_proj,
            a_raw: Param::new(Tensor::from_f64(&[e, D_STATE], &a)),
            d: constant_param(&[e], 1.0),
        }
    }

    /// Runs the scan over a `[N, T, E]` sequence.
    pub fn scan<'g>(&self, g: &'g Graph<T>, seq: Var<'g, T>) -> Var<'g, T> {
        let rank = self.dt_proj.weight.shape()[0];
        let n = self.a_raw.shape()[1];
        let p = self.x_proj.forward(g, seq);
        let dt_in = p.narrow(2, 0, rank);
        let b = p.narrow(2, rank, n);
        let c = p.narrow(2, rank + n, n);
        let delta = self.dt_proj.forward(g, dt_in).softplus();
        selective_scan_unchecked(ScanInputs {
            u: seq,
            delta,
            a: negative_softplus(g.param(&self.a_raw)),
            b,
            c,
            d: g.param(&self.d),
        })
    }
}

/// Visual state-space block: projection, depthwise conv, four-order scans
/// merged by summation, normalisation, SiLU gating and output projection.
pub struct Vssm<T: Float> {
    pub in_proj: Linear<T>,
    pub conv: DepthwiseConv<T>,
    pub directions: Vec<ScanDirection<T>>,
    pub out_norm: LayerNorm<T>,
    pub out_proj: Linear<T>,
}

impl_module!(Vssm { in_proj, conv, directions, out_norm, out_proj });

impl<T: Float> Vssm<T> {
    pub fn new(c: usize, rng: &mut dyn rand::RngCore) -> Self {
        let e = EXPAND * c;
        let dt_rank = c.div_ceil(16).max(1);
        Self {
            in_proj: Linear::new(c, 2 * e, true, rng),
            conv: DepthwiseConv::new(e, 3, Conv2dSpec::same(3), rng),
            directions: (0..4).map(|_| ScanDirection::new(e, dt_rank, rng)).collect(),
            out_norm: LayerNorm::new(e),
            out_proj: Linear::new(e, c, true, rng),
        }
    }

    fn inner(&self) -> usize {
        self.out_norm.gamma.shape()[0]
    }

    /// Projected, convolved and activated scan input plus the gate branch.
    pub fn scan_input<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> (Var<'g, T>, Var<'g, T>) {
        let e = self.inner();
        let xz = self.in_proj.forward(g, x);
        let xs = self.conv.forward(g, xz.narrow(3, 0, e)).silu();
        (xs, xz.narrow(3, e, e))
    }

    /// Scan of a `[N, H, W, E]` map along one order with the parameters of
    /// direction `k`, returned in image layout.
    pub fn scan_map<'g>(&self, g: &'g Graph<T>, xs: Var<'g, T>, order: ScanOrder, k: usize) -> Var<'g, T> {
        let s = xs.shape();
        let seq = order.flatten(xs);
        order.unflatten(self.directions[k].scan(g, seq), s[1], s[2])
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let (xs, z) = self.scan_input(g, x);
        let mut merged: Option<Var<'g, T>> = None;
        for (k, order) in ScanOrder::ALL.into_iter().enumerate() {
            let y = self.scan_map(g, xs, order, k);
            merged = Some(match merged {
                Some(m) => m.add(y),
                None => y,
            });
        }
        let y = self.out_norm.forward(g, merged.unwrap()).mul(z.silu());
        self.out_proj.forward(g, y)
    }
}
