//! Parameterised building blocks shared by the generator, the discriminators
//! and the segmentation net. Feature maps are NHWC.

use hsicolor_autograd::{impl_module, Conv2dSpec, Float, Graph, Param, Tensor, Var};

/// Gaussian weights with standard deviation `gain / sqrt(fan_in)`.
pub fn init_weight<T: Float>(shape: &[usize], fan_in: usize, gain: f64, rng: &mut dyn rand::RngCore) -> Param<T> {
    let std = gain / (fan_in.max(1) as f64).sqrt();
    Param::new(Tensor::randn(shape, std, rng))
}

pub fn constant_param<T: Float>(shape: &[usize], value: f64) -> Param<T> {
    Param::new(Tensor::full(shape, T::lit(value)))
}

pub struct Conv2d<T: Float> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub spec: Conv2dSpec,
}

impl_module!(Conv2d { weight, bias });

impl<T: Float> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, k: usize, spec: Conv2dSpec, bias: bool, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            weight: init_weight(&[k, k, cin, cout], k * k * cin, 1.0, rng),
            bias: bias.then(|| constant_param(&[cout], 0.0)),
            spec,
        }
    }

    /// Same-size convolution with an odd kernel.
    pub fn same(cin: usize, cout: usize, k: usize, rng: &mut dyn rand::RngCore) -> Self {
        Self::new(cin, cout, k, Conv2dSpec::same(k), true, rng)
    }

    pub fn pointwise(cin: usize, cout: usize, bias: bool, rng: &mut dyn rand::RngCore) -> Self {
        Self::new(cin, cout, 1, Conv2dSpec::default(), bias, rng)
    }

    pub fn zeroed(mut self) -> Self {
        self.set_zero();
        self
    }

    pub fn set_zero(&mut self) {
        self.weight.value_mut().data_mut().fill(T::zero());
        if let Some(b) = &mut self.bias {
            b.value_mut().data_mut().fill(T::zero());
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        x.conv2d(g.param(&self.weight), self.bias.as_ref().map(|b| g.param(b)), self.spec)
    }

    /// 1x1 kernel that sums the `cin / cout` channel blocks, each scaled by
    /// `scale`; zero bias.
    pub fn set_block_sum(&mut self, scale: f64) {
        let s = self.weight.shape().to_vec();
        assert!(s[0] == 1 && s[1] == 1 && s[2] % s[3] == 0, "block sum needs a 1x1 kernel with cin % cout == 0");
        let mut w = Tensor::zeros(&s);
        for i in 0..s[2] {
            w.set(&[0, 0, i, i % s[3]], T::lit(scale));
        }
        self.weight.set(w);
        if let Some(b) = &mut self.bias {
            b.value_mut().data_mut().fill(T::zero());
        }
    }

    pub fn cin(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn cout(&self) -> usize {
        self.weight.shape()[3]
    }
}

pub struct DepthwiseConv<T: Float> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub spec: Conv2dSpec,
}

impl_module!(DepthwiseConv { weight, bias });

impl<T: Float> DepthwiseConv<T> {
    pub fn new(c: usize, k: usize, spec: Conv2dSpec, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            weight: init_weight(&[k, k, c], k * k, 1.0, rng),
            bias: Some(constant_param(&[c], 0.0)),
            spec,
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        x.depthwise_conv2d(g.param(&self.weight), self.bias.as_ref().map(|b| g.param(b)), self.spec)
    }

    /// Centre tap 1, everything else 0.
    pub fn set_delta(&mut self) {
        let s = self.weight.shape().to_vec();
        let (k, c) = (s[0], s[2]);
        let w = self.weight.value_mut();
        w.data_mut().fill(T::zero());
        for ch in 0..c {
            w.set(&[k / 2, k / 2, ch], T::one());
        }
        if let Some(b) = &mut self.bias {
            b.value_mut().data_mut().fill(T::zero());
        }
    }
}

/// Depthwise `k x k` followed by pointwise mixing.
pub struct DsConv<T: Float> {
    pub depthwise: DepthwiseConv<T>,
    pub pointwise: Conv2d<T>,
}

impl_module!(DsConv { depthwise, pointwise });

impl<T: Float> DsConv<T> {
    pub fn new(cin: usize, cout: usize, k: usize, dilation: usize, rng: &mut dyn rand::RngCore) -> Self {
        let spec = Conv2dSpec::default().padding(dilation * (k / 2)).dilation(dilation);
        Self {
            depthwise: DepthwiseConv::new(cin, k, spec, rng),
            pointwise: Conv2d::pointwise(cin, cout, true, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        self.pointwise.forward(g, self.depthwise.forward(g, x))
    }

    /// Delta depthwise kernel and identity mixing (needs `cin == cout`).
    pub fn set_identity(&mut self) {
        self.depthwise.set_delta();
        self.pointwise.set_block_sum(1.0);
    }
}

pub struct Linear<T: Float> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

impl_module!(Linear { weight, bias });

impl<T: Float> Linear<T> {
    pub fn new(din: usize, dout: usize, bias: bool, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            weight: init_weight(&[din, dout], din, 1.0, rng),
            bias: bias.then(|| constant_param(&[dout], 0.0)),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        x.linear(g.param(&self.weight), self.bias.as_ref().map(|b| g.param(b)))
    }
}

/// Normalises over the last (channel) axis with a learned affine map.
pub struct LayerNorm<T: Float> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub eps: f64,
}

impl_module!(LayerNorm { gamma, beta });

impl<T: Float> LayerNorm<T> {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: constant_param(&[c], 1.0),
            beta: constant_param(&[c], 0.0),
            eps: 1e-5,
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let last = x.shape().len() - 1;
        let xn = standardize(x, &[last], self.eps);
        xn.mul(g.param(&self.gamma)).add(g.param(&self.beta))
    }
}

/// `(x - mean) / sqrt(var + eps)` over `axes` (biased variance).
pub fn standardize<'g, T: Float>(x: Var<'g, T>, axes: &[usize], eps: f64) -> Var<'g, T> {
    let mu = x.mean_axes(axes, true);
    let xc = x.sub(mu);
    let var = xc.square().mean_axes(axes, true);
    xc.div(var.add_scalar(T::lit(eps)).sqrt())
}

/// Group normalisation for NHWC maps.
pub struct GroupNorm<T: Float> {
    pub groups: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub eps: f64,
}

impl_module!(GroupNorm { gamma, beta });

impl<T: Float> GroupNorm<T> {
    pub fn new(groups: usize, c: usize) -> Self {
        assert_eq!(c % groups, 0, "{c} channels not divisible into {groups} groups");
        Self {
            groups,
            gamma: constant_param(&[c], 1.0),
            beta: constant_param(&[c], 0.0),
            eps: 1e-5,
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let s = x.shape();
        let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
        let gs = c / self.groups;
        let xg = x.reshape(&[n, h * w, self.groups, gs]);
        let xn = standardize(xg, &[1, 3], self.eps).reshape(&[n, h, w, c]);
        xn.mul(g.param(&self.gamma)).add(g.param(&self.beta))
    }
}

/// Per-sample, per-channel normalisation without affine parameters.
pub fn instance_norm<'g, T: Float>(x: Var<'g, T>) -> Var<'g, T> {
    standardize(x, &[1, 2], 1e-5)
}

/// `x + conv_b(gelu(conv_a(x)))` with 3x3 convolutions.
pub struct ResBlock<T: Float> {
    pub conv_a: Conv2d<T>,
    pub conv_b: Conv2d<T>,
}

impl_module!(ResBlock { conv_a, conv_b });

impl<T: Float> ResBlock<T> {
    pub fn new(c: usize, rng: &mut dyn rand::RngCore) -> Self {
        let conv_a = Conv2d::same(c, c, 3, rng);
        let mut conv_b = Conv2d::same(c, c, 3, rng);
        // start close to the identity
        let w = conv_b.weight.value_mut();
        *w = w.scale(T::lit(0.1));
        Self { conv_a, conv_b }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        x.add(self.conv_b.forward(g, self.conv_a.forward(g, x).gelu()))
    }

    /// Residual branch only.
    pub fn branch<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        self.conv_b.forward(g, self.conv_a.forward(g, x).gelu())
    }

    pub fn zero_branch(&mut self) {
        self.conv_b.set_zero();
    }
}

pub fn rng_from_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
