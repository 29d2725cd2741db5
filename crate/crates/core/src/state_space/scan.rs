use hsicolor_autograd::{Float, Tensor, Var};

use crate::error::{ensure, Result};

/// Operands of one scan. Shapes: `u`, `delta`: `[B, T, D]`; `a`: `[D, N]`;
/// `b`, `c`: `[B, T, N]`; `d`: `[D]`.
#[derive(Clone, Copy)]
pub struct ScanInputs<'g, T: Float> {
    pub u: Var<'g, T>,
    pub delta: Var<'g, T>,
    pub a: Var<'g, T>,
    pub b: Var<'g, T>,
    pub c: Var<'g, T>,
    pub d: Var<'g, T>,
}

/// `h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t`, `y_t = C_t h_t + D u_t`,
/// `h_0 = 0`, evaluated sequentially. Rejects non-positive step sizes.
pub fn selective_scan<'g, T: Float>(s: ScanInputs<'g, T>) -> Result<Var<'g, T>> {
    check_shapes(&s)?;
    ensure!(
        s.delta.value().data().iter().all(|&v| v > T::zero()),
        "selective scan step sizes must be positive"
    );
    Ok(selective_scan_unchecked(s))
}

fn check_shapes<T: Float>(s: &ScanInputs<'_, T>) -> Result<()> {
    let us = s.u.shape();
    ensure!(us.len() == 3 && us[1] >= 1, "scan input must be [B, T, D] with T >= 1, got {us:?}");
    let (bsz, t, d) = (us[0], us[1], us[2]);
    ensure!(s.delta.shape() == us, "delta shape {:?} != u shape {us:?}", s.delta.shape());
    let a = s.a.shape();
    ensure!(a.len() == 2 && a[0] == d && a[1] >= 1, "A must be [D, N], got {a:?}");
    let n = a[1];
    ensure!(s.b.shape() == [bsz, t, n], "B must be [B, T, N], got {:?}", s.b.shape());
    ensure!(s.c.shape() == [bsz, t, n], "C must be [B, T, N], got {:?}", s.c.shape());
    ensure!(s.d.shape() == [d], "D must be [D], got {:?}", s.d.shape());
    Ok(())
}

/// Scan without validation; callers guarantee shapes and positive steps.
pub fn selective_scan_unchecked<'g, T: Float>(s: ScanInputs<'g, T>) -> Var<'g, T> {
    let us = s.u.shape();
    let (bsz, t_len, dm) = (us[0], us[1], us[2]);
    let n = s.a.shape()[1];
    let (u, delta, a, bm, cm, dskip) = (s.u.value(), s.delta.value(), s.a.value(), s.b.value(), s.c.value(), s.d.value());

    let dn = dm * n;
    // decay factors and states for every step, reused by the backward sweep
    let mut decay = vec![T::zero(); bsz * t_len * dn];
    let mut states = vec![T::zero(); bsz * t_len * dn];
    let mut y = vec![T::zero(); bsz * t_len * dm];
    let mut h = vec![T::zero(); dn];
    for b in 0..bsz {
        h.fill(T::zero());
        for t in 0..t_len {
            let row = (b * t_len + t) * dm;
            let nrow = (b * t_len + t) * n;
            let base = (b * t_len + t) * dn;
            let bt = &bm.data()[nrow..nrow + n];
            let ct = &cm.data()[nrow..nrow + n];
            for d in 0..dm {
                let dt = delta.data()[row + d];
                let ut = u.data()[row + d];
                let du = dt * ut;
                let mut acc = T::zero();
                for k in 0..n {
                    let e = (dt * a.data()[d * n + k]).exp();
                    let hv = e * h[d * n + k] + du * bt[k];
                    h[d * n + k] = hv;
                    decay[base + d * n + k] = e;
                    acc += ct[k] * hv;
                }
                y[row + d] = acc + dskip.data()[d] * ut;
            }
            states[base..base + dn].copy_from_slice(&h);
        }
    }
    let out = Tensor::from_vec(&us, y);
    let g = s.u.graph();
    g.op(out, &[s.u, s.delta, s.a, s.b, s.c, s.d], move |gy, needs| {
        let gy = gy.data();
        let mut du = vec![T::zero(); u.len()];
        let mut ddelta = vec![T::zero(); delta.len()];
        let mut da = vec![T::zero(); a.len()];
        let mut db = vec![T::zero(); bm.len()];
        let mut dc = vec![T::zero(); cm.len()];
        let mut dd = vec![T::zero(); dskip.len()];
        // gradient flowing into h_t from later steps, already multiplied by the decay of step t+1
        let mut carry = vec![T::zero(); dn];
        for b in 0..bsz {
            carry.fill(T::zero());
            for t in (0..t_len).rev() {
                let row = (b * t_len + t) * dm;
                let nrow = (b * t_len + t) * n;
                let base = (b * t_len + t) * dn;
                let prev = (t > 0).then(|| base - dn);
                for d in 0..dm {
                    let g_y = gy[row + d];
                    let dt = delta.data()[row + d];
                    let ut = u.data()[row + d];
                    dd[d] += g_y * ut;
                    let mut g_u = g_y * dskip.data()[d];
                    let mut g_dt = T::zero();
                    for k in 0..n {
                        let i = d * n + k;
                        let hv = states[base + i];
                        dc[nrow + k] += g_y * hv;
                        let dh = carry[i] + cm.data()[nrow + k] * g_y;
                        let h_prev = prev.map_or(T::zero(), |p| states[p + i]);
                        let e = decay[base + i];
                        let bt = bm.data()[nrow + k];
                        // h = e * h_prev + dt * bt * ut, e = exp(dt * a)
                        let ge = dh * h_prev * e;
                        da[i] += ge * dt;
                        g_dt += ge * a.data()[i] + dh * bt * ut;
                        db[nrow + k] += dh * dt * ut;
                        g_u += dh * dt * bt;
                        carry[i] = dh * e;
                    }
                    du[row + d] = g_u;
                    ddelta[row + d] = g_dt;
                }
            }
        }
        let shapes = [u.shape(), delta.shape(), a.shape(), bm.shape(), cm.shape(), dskip.shape()];
        [du, ddelta, da, db, dc, dd]
            .into_iter()
            .zip(shapes)
            .zip(needs)
            .map(|((v, s), &need)| need.then(|| Tensor::from_vec(s, v)))
            .collect()
    })
}
