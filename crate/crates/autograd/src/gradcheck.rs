//! Central finite-difference checks of reverse-mode gradients, in `f64`.

use rand::rngs::StdRng;
use rand::seq::index::sample;
use rand::SeedableRng;

use crate::{Graph, Module, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Finite-difference step.
    pub h: f64,
    /// Denominator floor of the relative error, so that entries whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
    /// Entries sampled per input or parameter tensor.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            h: 1e-5,
            floor: 1e-3,
            samples: 6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub entries: Vec<Entry>,
}

impl Report {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Entry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Reduces a non-scalar output with a fixed random projection.
fn scalarize<'g>(g: &'g Graph<f64>, y: Var<'g, f64>, seed: u64) -> Var<'g, f64> {
    if y.shape().iter().product::<usize>() == 1 {
        return y.reshape(&[]);
    }
    let mut rng = StdRng::seed_from_u64(seed ^ 0x5eed);
    let r = g.constant(Tensor::uniform(&y.shape(), -1.0, 1.0, &mut rng));
    y.mul(r).sum_all()
}

fn get_entry<M: Module<f64>>(m: &M, name: &str, idx: usize) -> f64 {
    let mut v = f64::NAN;
    m.visit_params("", &mut |n, p| {
        if n == name {
            v = p.value().data()[idx];
        }
    });
    v
}

fn set_entry<M: Module<f64>>(m: &mut M, name: &str, idx: usize, v: f64) {
    m.visit_params_mut("", &mut |n, p| {
        if n == name {
            p.value_mut().data_mut()[idx] = v;
        }
    });
}

impl GradCheck {
    fn pick(&self, n: usize, rng: &mut StdRng) -> Vec<usize> {
        if n <= self.samples {
            (0..n).collect()
        } else {
            let mut v = sample(rng, n, self.samples).into_vec();
            v.sort_unstable();
            v
        }
    }

    fn rel(&self, a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(self.floor)
    }

    /// Checks gradients with respect to every input and every trainable
    /// parameter of `module`.
    pub fn run<M, F>(&self, module: &mut M, inputs: &[Tensor<f64>], f: F) -> Report
    where
        M: Module<f64>,
        F: for<'g> Fn(&'g Graph<f64>, &M, &[Var<'g, f64>]) -> Var<'g, f64>,
    {
        let eval = |m: &M, xs: &[Tensor<f64>]| -> f64 {
            let g = Graph::no_grad();
            let vars: Vec<_> = xs.iter().map(|x| g.input(x.clone())).collect();
            let y = f(&g, m, &vars);
            let y = scalarize(&g, y, self.seed);
            y.value().item()
        };

        // analytic
        let (input_grads, param_grads) = {
            let g = Graph::new();
            let vars: Vec<_> = inputs.iter().map(|x| g.input(x.clone())).collect();
            let y = f(&g, module, &vars);
            let y = scalarize(&g, y, self.seed);
            let grads = g.backward(y);
            let ig: Vec<Tensor<f64>> = vars
                .iter()
                .zip(inputs)
                .map(|(v, x)| grads.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
                .collect();
            let mut pg = Vec::new();
            module.visit_params("", &mut |name, p| {
                if p.trainable() {
                    let gp = grads.param(p).cloned().unwrap_or_else(|| Tensor::zeros(p.shape()));
                    pg.push((name.to_string(), gp));
                }
            });
            (ig, pg)
        };

        let mut rng = StdRng::seed_from_u64(self.seed);
        let mut report = Report::default();
        let mut xs = inputs.to_vec();
        for (k, ga) in input_grads.iter().enumerate() {
            for idx in self.pick(ga.len(), &mut rng) {
                let orig = xs[k].data()[idx];
                xs[k].data_mut()[idx] = orig + self.h;
                let fp = eval(module, &xs);
                xs[k].data_mut()[idx] = orig - self.h;
                let fm = eval(module, &xs);
                xs[k].data_mut()[idx] = orig;
                let numeric = (fp - fm) / (2.0 * self.h);
                let analytic = ga.data()[idx];
                report.entries.push(Entry {
                    name: format!("input{k}"),
                    index: idx,
                    analytic,
                    numeric,
                    rel_err: self.rel(analytic, numeric),
                });
            }
        }
        for (name, ga) in &param_grads {
            for idx in self.pick(ga.len(), &mut rng) {
                let orig = get_entry(module, name, idx);
                set_entry(module, name, idx, orig + self.h);
                let fp = eval(module, &xs);
                set_entry(module, name, idx, orig - self.h);
                let fm = eval(module, &xs);
                set_entry(module, name, idx, orig);
                let numeric = (fp - fm) / (2.0 * self.h);
                let analytic = ga.data()[idx];
                report.entries.push(Entry {
                    name: name.clone(),
                    index: idx,
                    analytic,
                    numeric,
                    rel_err: self.rel(analytic, numeric),
                });
            }
        }
        report
    }

    /// Checks a function of inputs only.
    pub fn run_inputs<F>(&self, inputs: &[Tensor<f64>], f: F) -> Report
    where
        F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Var<'g, f64>,
    {
        let mut none: Vec<crate::Param<f64>> = Vec::new();
        self.run(&mut none, inputs, |g, _, xs| f(g, xs))
    }
}
