//! Adam with per-parameter moments keyed by parameter name.

use std::collections::BTreeMap;

use hsicolor_autograd::{Float, Gradients, Module, Param, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Float> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: BTreeMap<String, Tensor<T>>,
    pub v: BTreeMap<String, Tensor<T>>,
}

impl<T: Float> Adam<T> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update of every trainable parameter of `module` that has a
    /// gradient. Parameters without a gradient keep their value and moments.
    pub fn update<M: Module<T> + ?Sized>(&mut self, module: &mut M, grads: &Gradients<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::lit(1.0 - self.beta1.powi(t));
        let bc2 = T::lit(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::lit(lr), T::lit(self.eps));
        let (ms, vs) = (&mut self.m, &mut self.v);
        module.visit_params_mut("", &mut |name, p: &mut Param<T>| {
            if !p.trainable() {
                return;
            }
            let Some(g) = grads.param(p) else { return };
            let m = ms.entry(name.to_string()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = vs.entry(name.to_string()).or_insert_with(|| Tensor::zeros(g.shape()));
            let w = p.value_mut();
            for (((w, &g), m), v) in w.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        });
    }
}
