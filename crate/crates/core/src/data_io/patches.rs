use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HyperCube, RgbImage, SceneSample};
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchWindow {
    pub oy: usize,
    pub ox: usize,
    pub height: usize,
    pub width: usize,
}

/// Window starts along one axis: multiples of the stride, with the final
/// window clamped so that it ends at the image edge.
pub fn window_origins(len: usize, patch: usize, overlap: usize) -> Vec<usize> {
    assert!(patch <= len && overlap < patch);
    let stride = patch - overlap;
    let n = (len - patch).div_ceil(stride) + 1;
    (0..n).map(|k| (k * stride).min(len - patch)).collect()
}

pub fn extract_patches(
    cube: &HyperCube,
    rgb: &RgbImage,
    patch_h: usize,
    patch_w: usize,
    overlap: usize,
) -> Result<Vec<PatchWindow>> {
    let (h, w) = (cube.height(), cube.width());
    ensure!(
        rgb.height() == h && rgb.width() == w,
        "cube {h}x{w} and rgb {}x{} are not aligned",
        rgb.height(),
        rgb.width()
    );
    ensure!(
        patch_h >= 1 && patch_w >= 1 && patch_h <= h && patch_w <= w,
        "patch {patch_h}x{patch_w} does not fit image {h}x{w}"
    );
    ensure!(
        overlap < patch_h.min(patch_w),
        "overlap {overlap} must be smaller than the patch"
    );
    let rows = window_origins(h, patch_h, overlap);
    let cols = window_origins(w, patch_w, overlap);
    Ok(rows
        .iter()
        .flat_map(|&oy| {
            cols.iter().map(move |&ox| PatchWindow {
                oy,
                ox,
                height: patch_h,
                width: patch_w,
            })
        })
        .collect())
}

/// Uniform crop origin in `[0, H - size] x [0, W - size]`.
pub fn random_crop_origin(h: usize, w: usize, size: usize, rng_state: u64) -> Result<(usize, usize)> {
    ensure!(
        size >= 1 && size <= h.min(w),
        "crop {size} does not fit {h}x{w}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(rng_state);
    Ok((rng.random_range(0..=h - size), rng.random_range(0..=w - size)))
}

pub fn random_crop_pair(sample: &SceneSample, size: usize, rng_state: u64) -> Result<SceneSample> {
    let (oy, ox) = random_crop_origin(sample.height(), sample.width(), size, rng_state)?;
    Ok(sample.crop(oy, ox, size, size))
}
