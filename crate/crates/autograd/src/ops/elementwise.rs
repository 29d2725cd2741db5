use std::sync::Arc;

use crate::{Float, Tensor, Var};

pub fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Float>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn gelu<T: Float>(x: T) -> T {
    let half = T::lit(0.5);
    half * x * (T::one() + (x * T::FRAC_1_SQRT_2()).erf())
}

pub fn gelu_grad<T: Float>(x: T) -> T {
    let half = T::lit(0.5);
    let cdf = half * (T::one() + (x * T::FRAC_1_SQRT_2()).erf());
    let pdf = (-(x * x) * half).exp() * T::lit(0.398_942_280_401_432_7);
    cdf + x * pdf
}

impl<'g, T: Float> Var<'g, T> {
    fn binary(
        self,
        other: Var<'g, T>,
        f: impl Fn(T, T) -> T,
        // (a, b, g) -> (da, db) elementwise on the broadcast shape
        df: impl Fn(T, T, T) -> (T, T) + 'static,
    ) -> Var<'g, T> {
        let a = self.value();
        let b = other.value();
        let out = a.broadcast_zip(&b, f);
        let out_shape = out.shape().to_vec();
        self.graph().op(out, &[self, other], move |g, needs| {
            let ab = a.broadcast_zip(g, |x, _| x);
            let bb = b.broadcast_zip(g, |x, _| x);
            let mut ga = Vec::with_capacity(g.len());
            let mut gb = Vec::with_capacity(g.len());
            for ((&x, &y), &gi) in ab.data().iter().zip(bb.data()).zip(g.data()) {
                let (da, db) = df(x, y, gi);
                ga.push(da);
                gb.push(db);
            }
            let ga = Tensor::from_vec(&out_shape, ga);
            let gb = Tensor::from_vec(&out_shape, gb);
            vec![
                needs[0].then(|| ga.sum_to_shape(a.shape())),
                needs[1].then(|| gb.sum_to_shape(b.shape())),
            ]
        })
    }

    pub fn add(self, other: Var<'g, T>) -> Var<'g, T> {
        let (sa, sb) = (self.shape(), other.shape());
        let out = self.value().broadcast_zip(&other.value(), |x, y| x + y);
        self.graph().op(out, &[self, other], move |g, needs| {
            vec![
                needs[0].then(|| g.sum_to_shape(&sa)),
                needs[1].then(|| g.sum_to_shape(&sb)),
            ]
        })
    }

    pub fn sub(self, other: Var<'g, T>) -> Var<'g, T> {
        let (sa, sb) = (self.shape(), other.shape());
        let out = self.value().broadcast_zip(&other.value(), |x, y| x - y);
        self.graph().op(out, &[self, other], move |g, needs| {
            vec![
                needs[0].then(|| g.sum_to_shape(&sa)),
                needs[1].then(|| g.sum_to_shape(&sb).map(|x| -x)),
            ]
        })
    }

    pub fn mul(self, other: Var<'g, T>) -> Var<'g, T> {
        self.binary(other, |x, y| x * y, |x, y, g| (g * y, g * x))
    }

    pub fn div(self, other: Var<'g, T>) -> Var<'g, T> {
        self.binary(other, |x, y| x / y, |x, y, g| (g / y, -g * x / (y * y)))
    }

    /// Elementwise op whose derivative is expressed through input and output.
    pub fn unary(
        self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<'g, T> {
        let x = self.value();
        let y = Arc::new(x.map(f));
        let y2 = y.clone();
        self.graph().op((*y).clone(), &[self], move |g, _| {
            let data: Vec<T> = x
                .data()
                .iter()
                .zip(y2.data())
                .zip(g.data())
                .map(|((&xi, &yi), &gi)| gi * df(xi, yi))
                .collect();
            vec![Some(Tensor::from_vec(x.shape(), data))]
        })
    }

    pub fn neg(self) -> Var<'g, T> {
        self.mul_scalar(-T::one())
    }

    pub fn add_scalar(self, s: T) -> Var<'g, T> {
        let out = self.value().map(|x| x + s);
        self.graph().op(out, &[self], |g, _| vec![Some(g.clone())])
    }

    pub fn mul_scalar(self, s: T) -> Var<'g, T> {
        let out = self.value().map(|x| x * s);
        self.graph().op(out, &[self], move |g, _| vec![Some(g.scale(s))])
    }

    pub fn exp(self) -> Var<'g, T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(self) -> Var<'g, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    /// Square root with a zero derivative at zero.
    pub fn sqrt(self) -> Var<'g, T> {
        self.unary(
            |x| x.sqrt(),
            |_, y| {
                if y > T::zero() {
                    T::lit(0.5) / y
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn square(self) -> Var<'g, T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn powf(self, p: T) -> Var<'g, T> {
        self.unary(move |x| x.powf(p), move |x, _| p * x.powf(p - T::one()))
    }

    pub fn abs(self) -> Var<'g, T> {
        self.unary(
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(self) -> Var<'g, T> {
        self.unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn silu(self) -> Var<'g, T> {
        self.unary(
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    pub fn gelu(self) -> Var<'g, T> {
        self.unary(gelu, |x, _| gelu_grad(x))
    }

    pub fn relu(self) -> Var<'g, T> {
        self.unary(
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: T) -> Var<'g, T> {
        self.unary(
            move |x| if x > T::zero() { x } else { x * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn softplus(self) -> Var<'g, T> {
        self.unary(softplus, |x, _| sigmoid(x))
    }
}
