use hsicolor_autograd::{impl_module, set_trainable, Conv2dSpec, Float, Graph, Tensor, Var};

use crate::data_io::SegMask;
use crate::error::{ensure, Result};
use crate::nn::Conv2d;

/// Added to the true-class probability before the log.
pub const SEG_EPS: f64 = 1e-8;

/// Compact encoder-decoder: a full-resolution stem, a strided encoder, two
/// dilated context convs, and a sub-pixel decoder with a skip connection.
pub struct SegNet<T: Float> {
    pub stem: Conv2d<T>,
    pub down: Conv2d<T>,
    pub ctx_a: Conv2d<T>,
    pub ctx_b: Conv2d<T>,
    pub ctx_fuse: Conv2d<T>,
    pub up: Conv2d<T>,
    pub dec: Conv2d<T>,
    pub head: Conv2d<T>,
    pub classes: usize,
}

impl_module!(SegNet { stem, down, ctx_a, ctx_b, ctx_fuse, up, dec, head });

impl<T: Float> SegNet<T> {
    pub fn new(classes: usize, width: usize, rng: &mut dyn rand::RngCore) -> Self {
        let (w, w2) = (width, 2 * width);
        let dil = |d: usize| Conv2dSpec::default().padding(d).dilation(d);
        Self {
            stem: Conv2d::same(3, w, 3, rng),
            down: Conv2d::new(w, w2, 3, Conv2dSpec::same(3).stride(2), true, rng),
            ctx_a: Conv2d::new(w2, w2, 3, dil(2), true, rng),
            ctx_b: Conv2d::new(w2, w2, 3, dil(4), true, rng),
            ctx_fuse: Conv2d::pointwise(3 * w2, w2, true, rng),
            up: Conv2d::pointwise(w2, 4 * w, true, rng),
            dec: Conv2d::same(2 * w, w, 3, rng),
            head: Conv2d::pointwise(w, classes, true, rng),
            classes,
        }
    }

    /// Class logits `[N, H, W, classes]` for an even-sized RGB map in `[-1, 1]`.
    pub fn forward<'g>(&self, g: &'g Graph<T>, rgb: Var<'g, T>) -> Result<Var<'g, T>> {
        let s = rgb.shape();
        ensure!(s.len() == 4 && s[3] == 3, "segmentation input must be [N, H, W, 3], got {s:?}");
        ensure!(s[1] % 2 == 0 && s[2] % 2 == 0, "segmentation input needs even sides, got {s:?}");
        let skip = self.stem.forward(g, rgb).relu();
        let e = self.down.forward(g, skip).relu();
        let a = self.ctx_a.forward(g, e).relu();
        let b = self.ctx_b.forward(g, a).relu();
        let ctx = self.ctx_fuse.forward(g, g.concat(&[e, a, b], 3)).relu();
        let up = self.up.forward(g, ctx).pixel_shuffle(2).relu();
        let d = self.dec.forward(g, g.concat(&[up, skip], 3)).relu();
        Ok(self.head.forward(g, d))
    }

    pub fn freeze(&mut self) {
        set_trainable(self, false);
    }
}

/// One-hot `[1, H, W, classes]` encoding of a mask; every label must be below
/// `classes`.
pub fn one_hot<T: Float>(mask: &SegMask, classes: usize) -> Result<Tensor<T>> {
    if let Some(&bad) = mask.labels().iter().find(|&&l| l as usize >= classes) {
        return Err(crate::Error::Validation(format!("label {bad} is out of range for {classes} classes")));
    }
    let mut t = Tensor::zeros(&[1, mask.height(), mask.width(), classes]);
    for (p, &l) in mask.labels().iter().enumerate() {
        t.data_mut()[p * classes + l as usize] = T::one();
    }
    Ok(t)
}

/// Mean over pixels of `-log(softmax(logits)[label] + eps)`.
pub fn cross_entropy<'g, T: Float>(g: &'g Graph<T>, logits: Var<'g, T>, target: &Tensor<T>) -> Result<Var<'g, T>> {
    ensure!(
        logits.shape() == target.shape(),
        "logits {:?} and one-hot target {:?} differ",
        logits.shape(),
        target.shape()
    );
    let p = logits.softmax().mul(g.constant(target.clone())).sum_axes(&[3], false);
    Ok(p.add_scalar(T::lit(SEG_EPS)).ln().neg().mean_all())
}

/// Segmentation-guided loss of a generated image against its mask.
pub fn seg_loss<'g, T: Float>(g: &'g Graph<T>, seg: &SegNet<T>, rgb: Var<'g, T>, mask: &SegMask) -> Result<Var<'g, T>> {
    let target = one_hot(mask, seg.classes)?;
    cross_entropy(g, seg.forward(g, rgb)?, &target)
}

/// Fraction of pixels whose arg-max class matches the mask.
pub fn pixel_accuracy<T: Float>(logits: &Tensor<T>, mask: &SegMask) -> f64 {
    let c = logits.shape()[3];
    let hits = logits
        .data()
        .chunks_exact(c)
        .zip(mask.labels())
        .filter(|(row, &l)| {
            let best = row
                .iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            best.0 == l as usize
        })
        .count();
    hits as f64 / mask.labels().len() as f64
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegPretrainConfig {
    pub width: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub target_accuracy: f64,
}

impl Default for SegPretrainConfig {
    fn default() -> Self {
        Self {
            width: 16,
            lr: 1e-3,
            max_epochs: 20,
            target_accuracy: 0.95,
        }
    }
}

/// Pixel accuracy over a set of samples.
pub fn dataset_accuracy(seg: &SegNet<f32>, samples: &[crate::data_io::SceneSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let g = Graph::no_grad();
        let logits = seg.forward(&g, g.input(rgb_tensor(&s.rgb)))?.value();
        total += pixel_accuracy(&logits, &s.mask);
    }
    Ok(total / samples.len().max(1) as f64)
}

pub fn rgb_tensor(img: &crate::data_io::RgbImage) -> Tensor<f32> {
    Tensor::from_vec(&[1, img.height(), img.width(), 3], img.data().to_vec())
}

/// Trains a segmentation net on ground-truth RGB/mask pairs with Adam until
/// its training pixel accuracy reaches the target, then freezes it. Returns
/// the frozen net and the accuracy after each epoch.
pub fn pretrain_segnet(
    samples: &[crate::data_io::SceneSample],
    classes: usize,
    cfg: &SegPretrainConfig,
    seed: u64,
) -> Result<(SegNet<f32>, Vec<f64>)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    ensure!(!samples.is_empty(), "segmentation pretraining needs samples");
    let mut seg = SegNet::new(classes, cfg.width, &mut crate::nn::rng_from_seed(seed));
    let mut opt = crate::optim::Adam::new(0.9, 0.999, 1e-8);
    let targets: Vec<Tensor<f32>> = samples.iter().map(|s| one_hot(&s.mask, classes)).collect::<Result<_>>()?;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(crate::data_io::sample_seed(seed, epoch as u64)));
        for &i in &order {
            let g = Graph::new();
            let logits = seg.forward(&g, g.constant(rgb_tensor(&samples[i].rgb)))?;
            let loss = cross_entropy(&g, logits, &targets[i])?;
            let grads = g.backward(loss);
            opt.update(&mut seg, &grads, cfg.lr);
        }
        let acc = dataset_accuracy(&seg, samples)?;
        history.push(acc);
        if acc >= cfg.target_accuracy {
            seg.freeze();
            return Ok((seg, history));
        }
    }
    Err(crate::Error::Validation(format!(
        "segmentation pretraining reached pixel accuracy {:.4} after {} epochs, below the target {:.4}; per-epoch accuracy: {history:?}",
        history.last().copied().unwrap_or(0.0),
        cfg.max_epochs,
        cfg.target_accuracy
    )))
}
