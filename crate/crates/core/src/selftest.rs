//! Quick invariant checks run by `hsicolor selftest`.

use hsicolor_autograd::{Conv2dSpec, Graph, Tensor};

use crate::attention::{decompose, deform_conv2d, AsmStage};
use crate::frequency::{haar_analysis, haar_synthesis, Fem};
use crate::losses::metrics::psnr;
use crate::losses::{image_ssim, LossWeights};
use crate::data_io::RgbImage;
use crate::nn::rng_from_seed;
use crate::training::checkpoint::{decode_checkpoint, encode_checkpoint, Arrays};
use crate::training::lr_schedule;

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn wavelet_roundtrip() -> (bool, String) {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = rng_from_seed(seed);
        let x = Tensor::<f64>::randn(&[1, 16, 12, 3], 1.0, &mut rng);
        let b = haar_analysis(&x);
        let back = haar_synthesis(&b);
        let energy = |t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum::<f64>();
        worst = worst
            .max(max_abs_diff(back.data(), x.data()))
            .max((energy(&b) - energy(&x)).abs() / energy(&x));
    }
    (worst < 1e-10, format!("worst error {worst:.3e}"))
}

fn fem_identity() -> (bool, String) {
    let mut fem = Fem::<f64>::new(4, 16, 16, &mut rng_from_seed(1));
    fem.set_identity();
    let x = Tensor::randn(&[1, 16, 16, 4], 1.0, &mut rng_from_seed(2));
    let g = Graph::no_grad();
    match fem.forward(&g, g.input(x.clone())) {
        Ok(y) => {
            let e = max_abs_diff(y.value().data(), x.data());
            (e < 1e-10, format!("max error {e:.3e}"))
        }
        Err(e) => (false, e.to_string()),
    }
}

fn asm_partition() -> (bool, String) {
    for seed in 0..20u64 {
        let mut rng = rng_from_seed(seed);
        let stage = AsmStage::<f32>::new(4, &mut rng);
        let g = Graph::no_grad();
        let f = g.input(Tensor::randn(&[1, 6, 6, 4], 3.0, &mut rng));
        let parts = decompose(f, stage.masks(&g, f));
        let sum = parts[0].add(parts[1]).add(parts[2].add(parts[3]));
        if sum.value().data() != f.value().data() {
            return (false, format!("seed {seed}: parts do not sum to the input"));
        }
    }
    (true, "20 draws exact".into())
}

fn deform_zero_offsets() -> (bool, String) {
    let mut rng = rng_from_seed(3);
    let g = Graph::no_grad();
    let x = g.input(Tensor::<f64>::randn(&[1, 7, 9, 3], 1.0, &mut rng));
    let w = g.input(Tensor::randn(&[3, 3, 3, 5], 1.0, &mut rng));
    let off = g.input(Tensor::zeros(&[1, 7, 9, 18]));
    let a = deform_conv2d(x, off, w, None).value();
    let b = x.conv2d(w, None, Conv2dSpec::same(3)).value();
    let e = max_abs_diff(a.data(), b.data());
    (e < 1e-12, format!("max error {e:.3e}"))
}

fn schedules() -> (bool, String) {
    let w = LossWeights::default();
    for e in 0..200 {
        let want = if e < 50 { 1.2e-4 } else { 1.2e-4 * (200 - e) as f64 / 150.0 };
        let lr = lr_schedule(1.2e-4, 50, 200, e).unwrap_or(f64::NAN);
        let seg = if e < 50 { 0.0 } else { 0.5 };
        if (lr - want).abs() > 1e-18 || w.lambda_seg(e) != seg {
            return (false, format!("epoch {e}: lr {lr}, lambda_seg {}", w.lambda_seg(e)));
        }
    }
    (lr_schedule(1.2e-4, 50, 200, 200).is_err(), "200 epochs".into())
}

fn metric_closed_forms() -> (bool, String) {
    let a: Vec<f64> = (0..192).map(|i| (i % 13) as f64 / 16.0).collect();
    let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
    let p = psnr(&a, &b, 1.0);
    let img = RgbImage::from_unit(8, 8, &a.iter().map(|&v| v as f32).collect::<Vec<_>>());
    let s = img.and_then(|i| image_ssim(&i, &i)).unwrap_or(f64::NAN);
    ((p - 20.0).abs() < 1e-6 && (s - 1.0).abs() < 1e-9, format!("psnr {p:.6} dB, self-ssim {s:.9}"))
}

fn checkpoint_roundtrip() -> (bool, String) {
    let mut arrays = Arrays::new();
    arrays.insert("a".into(), Tensor::randn(&[2, 3], 1.0, &mut rng_from_seed(4)));
    arrays.insert("b".into(), Tensor::from_vec(&[1], vec![f32::MIN_POSITIVE]));
    let bytes = encode_checkpoint(serde_json::json!({"k": 1}), &arrays);
    let ok = matches!(decode_checkpoint(&bytes), Ok((_, back)) if back == arrays);
    let mut corrupt = bytes.clone();
    *corrupt.last_mut().unwrap() ^= 1;
    (ok && decode_checkpoint(&corrupt).is_err(), format!("{} bytes", bytes.len()))
}

pub fn run() -> Vec<CheckResult> {
    let checks: [(&'static str, fn() -> (bool, String)); 7] = [
        ("wavelet_roundtrip", wavelet_roundtrip),
        ("fem_identity", fem_identity),
        ("asm_partition", asm_partition),
        ("deform_zero_offsets", deform_zero_offsets),
        ("schedules", schedules),
        ("metric_closed_forms", metric_closed_forms),
        ("checkpoint_roundtrip", checkpoint_roundtrip),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = f();
            CheckResult { name, passed, detail }
        })
        .collect()
}
