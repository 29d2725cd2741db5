use crate::{Float, Tensor, Var};

/// `op(a) @ op(b)` for row-major 2-D buffers, where `op` optionally transposes.
/// `a` is stored as `[m, k]` (or `[k, m]` when `ta`), `b` as `[k, n]` (or `[n, k]`).
#[allow(clippy::too_many_arguments)]
pub fn gemm_into<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    beta: T,
    c: &mut [T],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above pin every buffer to the described extent.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn matmul_t<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    gemm_into(m, k, n, a, ta, b, tb, T::zero(), &mut c);
    c
}

impl<'g, T: Float> Var<'g, T> {
    /// Matrix product over the last two axes. Leading axes of `self` are
    /// batched; `other` is either `[k, n]` (shared) or has the same batch.
    pub fn matmul(self, other: Var<'g, T>) -> Var<'g, T> {
        let a = self.value();
        let b = other.value();
        let sa = a.shape().to_vec();
        let sb = b.shape().to_vec();
        assert!(sa.len() >= 2 && sb.len() >= 2, "matmul needs matrices");
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        assert_eq!(k, k2, "matmul inner dims {sa:?} x {sb:?}");
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let shared = sb.len() == 2;
        if !shared {
            assert_eq!(sa[..sa.len() - 2], sb[..sb.len() - 2], "matmul batch mismatch");
        }
        let mut out = vec![T::zero(); batch * m * n];
        if shared {
            gemm_into(batch * m, k, n, a.data(), false, b.data(), false, T::zero(), &mut out);
        } else {
            for i in 0..batch {
                gemm_into(
                    m,
                    k,
                    n,
                    &a.data()[i * m * k..(i + 1) * m * k],
                    false,
                    &b.data()[i * k * n..(i + 1) * k * n],
                    false,
                    T::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.extend([m, n]);
        self.graph().op(Tensor::from_vec(&out_shape, out), &[self, other], move |g, needs| {
            let gd = g.data();
            let da = needs[0].then(|| {
                let mut da = vec![T::zero(); a.len()];
                if shared {
                    gemm_into(batch * m, n, k, gd, false, b.data(), true, T::zero(), &mut da);
                } else {
                    for i in 0..batch {
                        gemm_into(
                            m,
                            n,
                            k,
                            &gd[i * m * n..(i + 1) * m * n],
                            false,
                            &b.data()[i * k * n..(i + 1) * k * n],
                            true,
                            T::zero(),
                            &mut da[i * m * k..(i + 1) * m * k],
                        );
                    }
                }
                Tensor::from_vec(&sa, da)
            });
            let db = needs[1].then(|| {
                let mut db = vec![T::zero(); b.len()];
                if shared {
                    gemm_into(k, batch * m, n, a.data(), true, gd, false, T::zero(), &mut db);
                } else {
                    for i in 0..batch {
                        gemm_into(
                            k,
                            m,
                            n,
                            &a.data()[i * m * k..(i + 1) * m * k],
                            true,
                            &gd[i * m * n..(i + 1) * m * n],
                            false,
                            T::zero(),
                            &mut db[i * k * n..(i + 1) * k * n],
                        );
                    }
                }
                Tensor::from_vec(&sb, db)
            });
            vec![da, db]
        })
    }

    /// Affine map over the last axis with weight `[in, out]` and optional bias `[out]`.
    pub fn linear(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>) -> Var<'g, T> {
        let s = self.shape();
        let d_in = *s.last().expect("linear of a scalar");
        let d_out = weight.shape()[1];
        let rows = s.iter().product::<usize>() / d_in.max(1);
        let y = self.reshape(&[rows, d_in]).matmul(weight);
        let y = match bias {
            Some(b) => y.add(b),
            None => y,
        };
        let mut out_shape = s.clone();
        *out_shape.last_mut().unwrap() = d_out;
        y.reshape(&out_shape)
    }
}
