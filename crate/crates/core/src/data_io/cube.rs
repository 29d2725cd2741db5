use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{ensure, Error, Result};

pub const CUBE_MAGIC: &[u8; 4] = b"IHC1";
const DTYPE_F32: u32 = 1;
const HEADER_LEN: usize = 20;

/// `H x W x L` radiance cube stored band-sequential: `values[(b * H + y) * W + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperCube {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f32>,
}

impl HyperCube {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f32>) -> Result<Self> {
        ensure!(
            height >= 1 && width >= 1 && bands >= 1,
            "cube dims must be positive, got {height}x{width}x{bands}"
        );
        ensure!(
            values.len() == height * width * bands,
            "cube {height}x{width}x{bands} needs {} values, got {}",
            height * width * bands,
            values.len()
        );
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hyperspectral cube".into()));
        }
        Ok(Self {
            height,
            width,
            bands,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize, b: usize) -> f32 {
        self.values[(b * self.height + y) * self.width + x]
    }

    /// Pixel-interleaved copy (`[y][x][band]`), the layout the network consumes.
    pub fn to_hwc(&self) -> Vec<f32> {
        let (h, w, l) = (self.height, self.width, self.bands);
        let mut out = vec![0.0; h * w * l];
        for b in 0..l {
            for p in 0..h * w {
                out[p * l + b] = self.values[b * h * w + p];
            }
        }
        out
    }

    pub fn from_hwc(height: usize, width: usize, bands: usize, hwc: &[f32]) -> Result<Self> {
        ensure!(hwc.len() == height * width * bands, "hwc buffer size mismatch");
        let mut values = vec![0.0; hwc.len()];
        for b in 0..bands {
            for p in 0..height * width {
                values[b * height * width + p] = hwc[p * bands + b];
            }
        }
        Self::new(height, width, bands, values)
    }

    pub fn crop(&self, oy: usize, ox: usize, h: usize, w: usize) -> Self {
        assert!(oy + h <= self.height && ox + w <= self.width, "crop out of bounds");
        let mut values = Vec::with_capacity(h * w * self.bands);
        for b in 0..self.bands {
            for y in oy..oy + h {
                let row = (b * self.height + y) * self.width;
                values.extend_from_slice(&self.values[row + ox..row + ox + w]);
            }
        }
        Self {
            height: h,
            width: w,
            bands: self.bands,
            values,
        }
    }
}

pub fn write_cube(cube: &HyperCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if cube.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hyperspectral cube".into()));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * cube.values.len());
    buf.extend_from_slice(CUBE_MAGIC);
    for v in [cube.height as u32, cube.width as u32, cube.bands as u32, DTYPE_F32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &cube.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes)
}

fn decode_cube(bytes: &[u8]) -> Result<HyperCube> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("cube", "file shorter than header"));
    }
    if &bytes[..4] != CUBE_MAGIC {
        return Err(Error::format("cube", format!("bad magic {:?}", &bytes[..4])));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (h, w, l, dtype) = (field(0) as usize, field(1) as usize, field(2) as usize, field(3));
    if dtype != DTYPE_F32 {
        return Err(Error::format("cube", format!("unsupported dtype code {dtype}")));
    }
    let n = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(l))
        .ok_or_else(|| Error::format("cube", "header dims overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != n * 4 {
        return Err(Error::format(
            "cube",
            format!("header {h}x{w}x{l} needs {} payload bytes, found {}", n * 4, payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    HyperCube::new(h, w, l, values).map_err(|e| Error::format("cube", e.to_string()))
}

/// Min-max scaling to `[0, 1]`; a constant cube becomes all zeros.
pub fn normalize_cube(cube: &HyperCube) -> HyperCube {
    let (lo, hi) = cube
        .values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let values = if span > 0.0 {
        cube.values.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; cube.values.len()]
    };
    HyperCube { values, ..cube.clone() }
}
