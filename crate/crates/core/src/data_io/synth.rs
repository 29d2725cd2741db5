use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{HyperCube, RgbImage, SegMask};
use crate::error::{ensure, Result};

/// Class colours in `[0, 1]`; class `k` is painted with `PALETTE[k]`.
pub const PALETTE: [[f32; 3]; 16] = [
    [0.85, 0.20, 0.15],
    [0.20, 0.65, 0.25],
    [0.15, 0.30, 0.80],
    [0.90, 0.80, 0.20],
    [0.60, 0.25, 0.70],
    [0.15, 0.75, 0.80],
    [0.95, 0.55, 0.10],
    [0.45, 0.45, 0.45],
    [0.55, 0.35, 0.15],
    [0.95, 0.60, 0.75],
    [0.10, 0.40, 0.35],
    [0.70, 0.85, 0.45],
    [0.35, 0.15, 0.40],
    [0.85, 0.85, 0.85],
    [0.30, 0.50, 0.95],
    [0.75, 0.10, 0.45],
];

const NOISE_SIGMA: f64 = 0.02;
/// Signatures come from a fixed library so that a class looks the same in
/// every scene; only geometry, shading and noise vary with the scene seed.
const SIGNATURE_LIBRARY_SEED: u64 = 0x5157_u64;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub cube: HyperCube,
    pub rgb: RgbImage,
    pub mask: SegMask,
    pub seed: u64,
}

impl SceneSample {
    pub fn height(&self) -> usize {
        self.cube.height()
    }

    pub fn width(&self) -> usize {
        self.cube.width()
    }

    pub fn crop(&self, oy: usize, ox: usize, h: usize, w: usize) -> Self {
        Self {
            cube: self.cube.crop(oy, ox, h, w),
            rgb: self.rgb.crop(oy, ox, h, w),
            mask: self.mask.crop(oy, ox, h, w),
            seed: self.seed,
        }
    }
}

/// Mixes a base seed with a sample index (splitmix64 finaliser).
pub fn sample_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * (2.0 * p1
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3)
}

/// Smooth spectral signature of `class` over `bands` bands, values in `[0.1, 0.9]`.
pub fn class_signature(class: usize, bands: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(SIGNATURE_LIBRARY_SEED, class as u64));
    let n_ctrl = 4 + bands / 4;
    let step = Normal::new(0.0, 0.2).unwrap();
    let mut ctrl = Vec::with_capacity(n_ctrl);
    let mut v: f64 = rng.random_range(0.2..0.8);
    for _ in 0..n_ctrl {
        ctrl.push(v);
        v = (v + step.sample(&mut rng)).clamp(0.1, 0.9);
    }
    (0..bands)
        .map(|b| {
            let pos = if bands == 1 {
                0.0
            } else {
                b as f64 / (bands - 1) as f64 * (n_ctrl - 1) as f64
            };
            let i = (pos.floor() as usize).min(n_ctrl - 2);
            let t = pos - i as f64;
            let at = |k: isize| ctrl[k.clamp(0, n_ctrl as isize - 1) as usize];
            let i = i as isize;
            catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), t).clamp(0.1, 0.9) as f32
        })
        .collect()
}

/// Deterministic paired scene: Voronoi classes, class signatures plus noise in
/// the cube, palette colours under a smooth shading field in the RGB image.
pub fn synth_scene(seed: u64, h: usize, w: usize, bands: usize, num_classes: usize) -> Result<SceneSample> {
    ensure!(h >= 8 && w >= 8, "scene must be at least 8x8, got {h}x{w}");
    ensure!(bands >= 2, "need at least 2 bands, got {bands}");
    ensure!(
        (2..=16).contains(&num_classes),
        "num_classes must be in 2..=16, got {num_classes}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sites: Vec<(usize, usize)> = Vec::with_capacity(num_classes);
    while sites.len() < num_classes {
        let s = (rng.random_range(0..h), rng.random_range(0..w));
        if !sites.contains(&s) {
            sites.push(s);
        }
    }
    let mut labels = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut best = (usize::MAX, 0);
            for (k, &(sy, sx)) in sites.iter().enumerate() {
                let d = sy.abs_diff(y).pow(2) + sx.abs_diff(x).pow(2);
                if d < best.0 {
                    best = (d, k);
                }
            }
            labels[y * w + x] = best.1 as u8;
        }
    }

    let signatures: Vec<Vec<f32>> = (0..num_classes).map(|k| class_signature(k, bands)).collect();
    let noise = Normal::new(0.0, NOISE_SIGMA).unwrap();
    let mut cube = vec![0.0f32; h * w * bands];
    for b in 0..bands {
        for p in 0..h * w {
            let s = signatures[labels[p] as usize][b] as f64;
            cube[b * h * w + p] = (s + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }

    // two low-frequency cosines, mapped to [0.75, 1.0]
    let mut waves = [(0.0f64, 0.0f64, 0.0f64); 2];
    for wv in &mut waves {
        *wv = (
            rng.random_range(0.3..1.5),
            rng.random_range(0.3..1.5),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
    }
    let mut rgb = vec![0.0f32; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let field: f64 = waves
                .iter()
                .map(|&(fy, fx, ph)| {
                    0.5 * (std::f64::consts::TAU * (fy * y as f64 / h as f64 + fx * x as f64 / w as f64) + ph).cos()
                })
                .sum();
            let shade = 0.875 + 0.125 * field;
            let color = PALETTE[labels[y * w + x] as usize];
            for c in 0..3 {
                rgb[(y * w + x) * 3 + c] = (color[c] as f64 * shade * 2.0 - 1.0) as f32;
            }
        }
    }

    Ok(SceneSample {
        cube: HyperCube::new(h, w, bands, cube)?,
        rgb: RgbImage::new(h, w, rgb)?,
        mask: SegMask::new(h, w, num_classes, labels)?,
        seed,
    })
}
