use crate::{Float, Tensor, Var};

impl<'g, T: Float> Var<'g, T> {
    /// Softmax over the last axis.
    pub fn softmax(self) -> Var<'g, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let d = *shape.last().expect("softmax of a scalar");
        let mut y = x.data().to_vec();
        for row in y.chunks_mut(d) {
            let m = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let y = Tensor::from_vec(&shape, y);
        let y2 = y.clone();
        self.graph().op(y, &[self], move |g, _| {
            let mut dx = vec![T::zero(); g.len()];
            for ((yr, gr), dr) in y2
                .data()
                .chunks(d)
                .zip(g.data().chunks(d))
                .zip(dx.chunks_mut(d))
            {
                let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                for j in 0..d {
                    dr[j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![Some(Tensor::from_vec(&shape, dx))]
        })
    }
}
