//! 8-bit RGB images and binary PPM (`P6`) encoding.

use std::path::Path;

use crate::checkpoint::write_atomic;
use crate::error::{ensure, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Largest width or height accepted by the reader.
pub const MAX_SIDE: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major `height × width × 3` bytes.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        ensure!(
            width > 0 && height > 0 && data.len() == width * height * 3,
            Image,
            "{} bytes for a {width}×{height} image",
            data.len()
        );
        Ok(RgbImage { width, height, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Maps an `[H, W, 3]` tensor from `[-1, 1]` to bytes, clamping outside values.
pub fn tensor_to_image<T: Scalar>(t: &Tensor<T>) -> Result<RgbImage> {
    ensure!(
        t.rank() == 3 && t.dim(2) == 3,
        Shape,
        "image tensor must be [H, W, 3], got {:?}",
        t.shape()
    );
    ensure!(t.all_finite(), NonFinite, "image contains non-finite values");
    let data = t
        .data()
        .iter()
        .map(|v| ((v.as_f64() + 1.0) * 0.5).clamp(0.0, 1.0))
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    RgbImage::new(t.dim(1), t.dim(0), data)
}

/// Tiles equally sized images into a grid `cols` wide, row by row.
pub fn image_grid(images: &[RgbImage], cols: usize) -> Result<RgbImage> {
    ensure!(!images.is_empty() && cols > 0, Image, "grid needs images and columns");
    let (w, h) = (images[0].width, images[0].height);
    ensure!(
        images.iter().all(|i| i.width == w && i.height == h),
        Image,
        "grid images differ in size"
    );
    let cols = cols.min(images.len());
    let rows = images.len().div_ceil(cols);
    let (gw, gh) = (w * cols, h * rows);
    let mut data = vec![0u8; gw * gh * 3];
    for (k, img) in images.iter().enumerate() {
        let (ox, oy) = ((k % cols) * w, (k / cols) * h);
        for y in 0..h {
            let dst = ((oy + y) * gw + ox) * 3;
            data[dst..dst + w * 3].copy_from_slice(&img.data[y * w * 3..(y + 1) * w * 3]);
        }
    }
    RgbImage::new(gw, gh, data)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
            ensure!(self.pos - start <= 9, Image, "{what} has too many digits");
        }
        ensure!(self.pos > start, Image, "expected {what} at byte {start}");
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        Ok(text.parse().expect("at most nine digits"))
    }
}

/// Parses a binary `P6` image with `maxval <= 255`. Samples are rescaled to
/// `0..=255` when `maxval` is smaller.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    ensure!(bytes.starts_with(b"P6"), Image, "not a binary PPM (missing P6 magic)");
    let mut h = Header { bytes, pos: 2 };
    ensure!(
        bytes.get(2).is_some_and(|c| c.is_ascii_whitespace() || *c == b'#'),
        Image,
        "missing separator after magic"
    );
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    ensure!(
        (1..=MAX_SIDE).contains(&width) && (1..=MAX_SIDE).contains(&height),
        Image,
        "unsupported size {width}×{height}"
    );
    ensure!((1..=255).contains(&maxval), Image, "unsupported maxval {maxval}");
    ensure!(
        bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace),
        Image,
        "missing whitespace after maxval"
    );
    let body = &bytes[h.pos + 1..];
    let n = width * height * 3;
    ensure!(
        body.len() == n,
        Image,
        "pixel data has {} bytes, expected {n}",
        body.len()
    );
    let data = if maxval == 255 {
        body.to_vec()
    } else {
        body.iter()
            .map(|&v| {
                ensure!(v as usize <= maxval, Image, "sample {v} exceeds maxval {maxval}");
                Ok(((v as usize * 255 + maxval / 2) / maxval) as u8)
            })
            .collect::<Result<Vec<u8>>>()?
    };
    RgbImage::new(width, height, data)
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_atomic(path, &encode_ppm(img))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}
