use std::fs;
use std::path::Path;

use crate::error::{ensure, Error, Result};

/// `H x W x 3` image, pixel-interleaved, values in the training range `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(height >= 1 && width >= 1, "image dims must be positive");
        ensure!(
            data.len() == height * width * 3,
            "rgb {height}x{width} needs {} values, got {}",
            height * width * 3,
            data.len()
        );
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rgb image".into()));
        }
        ensure!(
            data.iter().all(|v| (-1.0..=1.0).contains(v)),
            "rgb values must lie in [-1, 1]"
        );
        Ok(Self { height, width, data })
    }

    /// Builds from values in `[0, 1]`.
    pub fn from_unit(height: usize, width: usize, unit: &[f32]) -> Result<Self> {
        Self::new(height, width, unit.iter().map(|v| v * 2.0 - 1.0).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Values mapped to `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f32> {
        self.data.iter().map(|v| (v + 1.0) * 0.5).collect()
    }

    pub fn crop(&self, oy: usize, ox: usize, h: usize, w: usize) -> Self {
        assert!(oy + h <= self.height && ox + w <= self.width, "crop out of bounds");
        let mut data = Vec::with_capacity(h * w * 3);
        for y in oy..oy + h {
            let row = (y * self.width + ox) * 3;
            data.extend_from_slice(&self.data[row..row + w * 3]);
        }
        Self { height: h, width: w, data }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMask {
    height: usize,
    width: usize,
    num_classes: usize,
    labels: Vec<u8>,
}

impl SegMask {
    pub fn new(height: usize, width: usize, num_classes: usize, labels: Vec<u8>) -> Result<Self> {
        ensure!(labels.len() == height * width, "mask size mismatch");
        ensure!((1..=256).contains(&num_classes), "num_classes out of range");
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn crop(&self, oy: usize, ox: usize, h: usize, w: usize) -> Self {
        assert!(oy + h <= self.height && ox + w <= self.width, "crop out of bounds");
        let mut labels = Vec::with_capacity(h * w);
        for y in oy..oy + h {
            labels.extend_from_slice(&self.labels[y * self.width + ox..y * self.width + ox + w]);
        }
        Self {
            height: h,
            width: w,
            num_classes: self.num_classes,
            labels,
        }
    }
}

fn to_byte(v: f32) -> u8 {
    (((v + 1.0) * 0.5 * 255.0).round()).clamp(0.0, 255.0) as u8
}

fn netpbm_header(magic: &str, w: usize, h: usize) -> Vec<u8> {
    format!("{magic}\n{w} {h}\n255\n").into_bytes()
}

pub fn write_ppm(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = netpbm_header("P6", img.width, img.height);
    buf.extend(img.data.iter().map(|&v| to_byte(v)));
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(mask: &SegMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = netpbm_header("P5", mask.width, mask.height);
    buf.extend_from_slice(&mask.labels);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Parses a binary netpbm header, returning (width, height, payload offset).
fn parse_netpbm(bytes: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format("netpbm", "bad magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("netpbm", "bad header field"))?;
    }
    if fields[2] != 255 {
        return Err(Error::format("netpbm", "only maxval 255 is supported"));
    }
    Ok((fields[0], fields[1], pos + 1))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, off) = parse_netpbm(&bytes, b"P6")?;
    let payload = bytes.get(off..off + w * h * 3).ok_or_else(|| Error::format("ppm", "truncated"))?;
    RgbImage::new(h, w, payload.iter().map(|&b| b as f32 / 255.0 * 2.0 - 1.0).collect())
}

pub fn read_pgm(path: impl AsRef<Path>, num_classes: usize) -> Result<SegMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, off) = parse_netpbm(&bytes, b"P5")?;
    let payload = bytes.get(off..off + w * h).ok_or_else(|| Error::format("pgm", "truncated"))?;
    SegMask::new(h, w, num_classes, payload.to_vec())
}
