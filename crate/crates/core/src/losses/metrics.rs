//! Image quality metrics on RGB images mapped to `[0, 1]`.

use hsicolor_autograd::{Conv2dSpec, Float, Graph, Tensor, Var};

use crate::data_io::RgbImage;
use crate::error::{ensure, Result};

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const UIQI_WINDOW: usize = 8;
pub const UIQI_EPS: f64 = 1e-12;
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// `10 log10(range^2 / mse)`, capped at [`PSNR_CAP`] (identical inputs).
pub fn psnr(pred: &[f64], gt: &[f64], range: f64) -> f64 {
    assert_eq!(pred.len(), gt.len(), "psnr inputs differ in length");
    let mse = pred.iter().zip(gt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64;
    if mse == 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (range * range / mse).log10()).min(PSNR_CAP)
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Luma `[N, H, W, 1]` of an RGB map `[N, H, W, 3]`.
pub fn luma<'g, T: Float>(g: &'g Graph<T>, rgb: Var<'g, T>) -> Var<'g, T> {
    let w = g.constant(Tensor::from_f64(&[3, 1], &LUMA));
    let s = rgb.shape();
    rgb.reshape(&[s[0] * s[1] * s[2], 3]).matmul(w).reshape(&[s[0], s[1], s[2], 1])
}

/// Side of the SSIM window used for an `h x w` map: 11, or the largest odd
/// size that fits a smaller map.
pub fn ssim_window(h: usize, w: usize) -> usize {
    let m = SSIM_WINDOW.min(h).min(w);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Mean SSIM of two single-channel maps over all valid Gaussian windows
/// (see [`ssim_window`] for the window size).
pub fn ssim_map_mean<'g, T: Float>(g: &'g Graph<T>, a: Var<'g, T>, b: Var<'g, T>, range: f64) -> Var<'g, T> {
    let s = a.shape();
    let k = ssim_window(s[1], s[2]);
    let taps = gaussian_taps(k, SSIM_SIGMA);
    let kernel: Vec<f64> = (0..k * k).flat_map(|i| [taps[i / k] * taps[i % k]; 5]).collect();
    let kernel = g.constant(Tensor::from_f64(&[k, k, 5], &kernel));
    let stack = g.concat(&[a, b, a.square(), b.square(), a.mul(b)], 3);
    let m = stack.depthwise_conv2d(kernel, None, Conv2dSpec::default());
    let ch = |i| m.narrow(3, i, 1);
    let (mu_a, mu_b) = (ch(0), ch(1));
    let (mu_aa, mu_bb, mu_ab) = (mu_a.square(), mu_b.square(), mu_a.mul(mu_b));
    let var_a = ch(2).sub(mu_aa);
    let var_b = ch(3).sub(mu_bb);
    let cov = ch(4).sub(mu_ab);
    let c1 = T::lit((0.01 * range).powi(2));
    let c2 = T::lit((0.03 * range).powi(2));
    let two = T::lit(2.0);
    let num = mu_ab.mul_scalar(two).add_scalar(c1).mul(cov.mul_scalar(two).add_scalar(c2));
    let den = mu_aa.add(mu_bb).add_scalar(c1).mul(var_a.add(var_b).add_scalar(c2));
    num.div(den).mean_all()
}

fn unit_tensor(img: &RgbImage) -> Tensor<f64> {
    let data: Vec<f64> = img.to_unit().iter().map(|&v| v as f64).collect();
    Tensor::from_vec(&[1, img.height(), img.width(), 3], data)
}

fn check_pair(pred: &RgbImage, gt: &RgbImage, min: usize) -> Result<()> {
    ensure!(
        pred.height() == gt.height() && pred.width() == gt.width(),
        "image sizes differ: {}x{} vs {}x{}",
        pred.height(),
        pred.width(),
        gt.height(),
        gt.width()
    );
    ensure!(
        pred.height() >= min && pred.width() >= min,
        "images must be at least {min}x{min}"
    );
    Ok(())
}

/// PSNR in dB of two images on the `[0, 1]` scale.
pub fn image_psnr(pred: &RgbImage, gt: &RgbImage) -> Result<f64> {
    check_pair(pred, gt, 1)?;
    let a: Vec<f64> = pred.to_unit().iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = gt.to_unit().iter().map(|&v| v as f64).collect();
    Ok(psnr(&a, &b, 1.0))
}

/// SSIM of the BT.601 luma of two images on the `[0, 1]` scale.
pub fn image_ssim(pred: &RgbImage, gt: &RgbImage) -> Result<f64> {
    check_pair(pred, gt, 1)?;
    let g = Graph::<f64>::no_grad();
    let a = luma(&g, g.constant(unit_tensor(pred)));
    let b = luma(&g, g.constant(unit_tensor(gt)));
    Ok(ssim_map_mean(&g, a, b, 1.0).value().item())
}

/// Universal image quality index over all 8x8 windows of two planes.
///
/// Window statistics are taken relative to the window's first pixel, so a
/// constant window has exactly zero variance and scores 0 by the epsilon rule.
pub fn uiqi_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = UIQI_WINDOW;
    assert!(h >= k && w >= k, "uiqi needs at least {k}x{k}");
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let (a0, b0) = (a[y * w + x], b[y * w + x]);
            let (mut sa, mut sb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (y + i) * w + x + j;
                    sa += a[p] - a0;
                    sb += b[p] - b0;
                }
            }
            let (da, db) = (sa / n, sb / n);
            let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (y + i) * w + x + j;
                    let (ea, eb) = (a[p] - a0 - da, b[p] - b0 - db);
                    vaa += ea * ea;
                    vbb += eb * eb;
                    vab += ea * eb;
                }
            }
            let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
            let (ma, mb) = (a0 + da, b0 + db);
            let num = 4.0 * vab * ma * mb;
            let den = (vaa + vbb) * (ma * ma + mb * mb);
            total += num / den.max(UIQI_EPS);
            count += 1;
        }
    }
    total / count as f64
}

fn luma_plane(img: &RgbImage) -> Vec<f64> {
    img.to_unit()
        .chunks_exact(3)
        .map(|p| LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64)
        .collect()
}

/// UIQI of the luma of two images on the `[0, 1]` scale.
pub fn image_uiqi(pred: &RgbImage, gt: &RgbImage) -> Result<f64> {
    check_pair(pred, gt, UIQI_WINDOW)?;
    Ok(uiqi_plane(&luma_plane(pred), &luma_plane(gt), pred.height(), pred.width()))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    pub uiqi: f64,
}

impl MetricRow {
    pub fn compute(name: impl Into<String>, pred: &RgbImage, gt: &RgbImage) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            psnr: image_psnr(pred, gt)?,
            ssim: image_ssim(pred, gt)?,
            uiqi: image_uiqi(pred, gt)?,
        })
    }

    fn line(&self) -> String {
        format!("name={} psnr={:.6} ssim={:.6} uiqi={:.6}", self.name, self.psnr, self.ssim, self.uiqi)
    }
}

/// Per-image rows and their arithmetic means.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn new(rows: Vec<MetricRow>) -> Result<Self> {
        ensure!(!rows.is_empty(), "metric report needs at least one image");
        Ok(Self { rows })
    }

    pub fn mean(&self) -> MetricRow {
        let n = self.rows.len() as f64;
        let avg = |f: fn(&MetricRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        MetricRow {
            name: "mean".into(),
            psnr: avg(|r| r.psnr),
            ssim: avg(|r| r.ssim),
            uiqi: avg(|r| r.uiqi),
        }
    }

    /// One `key=value` line per image, then the mean row.
    pub fn to_text(&self) -> String {
        let mut out: String = self.rows.iter().map(|r| r.line() + "\n").collect();
        out.push_str(&self.mean().line());
        out.push('\n');
        out
    }
}
