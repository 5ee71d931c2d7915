//! RGB raster crop and bicubic upscale used by the zoom loop.

use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{BoundingBox, Dims};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer holds {actual} bytes, expected {expected} for {width}x{height} RGB")]
    BufferSize {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("image dimensions must be at least 1x1, got {0}x{1}")]
    EmptyImage(u32, u32),
    #[error("crop [{x1}, {y1}, {x2}, {y2}] is outside the {width}x{height} image")]
    FrameViolation {
        x1: i64,
        y1: i64,
        x2: i64,
        y2: i64,
        width: u32,
        height: u32,
    },
    #[error("upscale factor must be finite and >= 1, got {0}")]
    InvalidFactor(f64),
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

/// Interleaved 8-bit RGB image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage(width, height));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImageError::BufferSize {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let n = width as usize * height as usize;
        Self::new(
            width,
            height,
            rgb.iter().copied().cycle().take(n * 3).collect(),
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the integer rectangle `[x1, x2) x [y1, y2)`, clipped to the image.
    pub fn fill_rect(&mut self, x1: u32, y1: u32, x2: u32, y2: u32, rgb: [u8; 3]) {
        let (x2, y2) = (x2.min(self.width), y2.min(self.height));
        if x1 >= x2 {
            return;
        }
        let w = self.width as usize;
        for y in y1..y2 {
            let row = &mut self.pixels
                [(y as usize * w + x1 as usize) * 3..(y as usize * w + x2 as usize) * 3];
            for px in row.chunks_exact_mut(3) {
                px.copy_from_slice(&rgb);
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let rgb = image::load_from_memory(bytes)?.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w, h, rgb.into_raw())
    }

    pub fn open(path: &Path) -> Result<Self, ImageError> {
        let rgb = image::open(path)?.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w, h, rgb.into_raw())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction")
    }
}

/// Crops `rect` (rounded to whole pixels) out of `img`.
pub fn crop(img: &RasterImage, rect: &BoundingBox) -> Result<RasterImage, ImageError> {
    let x1 = rect.x1().round() as i64;
    let y1 = rect.y1().round() as i64;
    let x2 = rect.x2().round() as i64;
    let y2 = rect.y2().round() as i64;
    let (w, h) = (i64::from(img.width), i64::from(img.height));
    if x1 < 0 || y1 < 0 || x2 > w || y2 > h || x2 - x1 < 1 || y2 - y1 < 1 {
        return Err(ImageError::FrameViolation {
            x1,
            y1,
            x2,
            y2,
            width: img.width,
            height: img.height,
        });
    }
    let row_bytes = (x2 - x1) as usize * 3;
    let mut pixels = Vec::with_capacity(row_bytes * (y2 - y1) as usize);
    for y in y1 as usize..y2 as usize {
        let start = (y * img.width as usize + x1 as usize) * 3;
        pixels.extend_from_slice(&img.pixels[start..start + row_bytes]);
    }
    RasterImage::new((x2 - x1) as u32, (y2 - y1) as u32, pixels)
}

/// Catmull-Rom cubic convolution kernel (a = -0.5).
pub fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and weights for every output position along one axis.
struct AxisTaps {
    index: Vec<[usize; 4]>,
    weight: Vec<[f64; 4]>,
}

impl AxisTaps {
    fn new(src_len: usize, dst_len: usize, factor: f64) -> Self {
        let last = src_len as i64 - 1;
        let mut index = Vec::with_capacity(dst_len);
        let mut weight = Vec::with_capacity(dst_len);
        for o in 0..dst_len {
            let s = (o as f64 + 0.5) / factor - 0.5;
            let base = s.floor();
            let mut idx = [0usize; 4];
            let mut wt = [0.0f64; 4];
            for k in 0..4 {
                let tap = base + k as f64 - 1.0;
                idx[k] = (tap as i64).clamp(0, last) as usize;
                wt[k] = catmull_rom(s - tap);
            }
            index.push(idx);
            weight.push(wt);
        }
        Self { index, weight }
    }
}

/// `x.round().clamp(0.0, 255.0) as u8` without the libm call; the
/// fractional part of a value below 256 is exact.
#[inline]
fn round_to_u8(x: f64) -> u8 {
    if x.is_nan() || x <= 0.0 {
        0
    } else if x >= 255.0 {
        255
    } else {
        let t = x as u8;
        t + u8::from(x - f64::from(t) >= 0.5)
    }
}

/// Bicubic upscale by `factor` with half-pixel-center alignment and
/// clamped edges. Output dims are `round(dims * factor)`.
pub fn upscale_bicubic(img: &RasterImage, factor: f64) -> Result<RasterImage, ImageError> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(ImageError::InvalidFactor(factor));
    }
    let (w, h) = (img.width as usize, img.height as usize);
    let ow = (w as f64 * factor).round() as usize;
    let oh = (h as f64 * factor).round() as usize;
    let xt = AxisTaps::new(w, ow, factor);
    let yt = AxisTaps::new(h, oh, factor);

    // Horizontally filtered source rows, kept in f64 so nothing is rounded
    // between passes. Any output row reads four consecutive (clamped) source
    // rows, and those only move forward, so a four-slot ring suffices.
    let stride = ow * 3;
    let mut ring: [(usize, Vec<f64>); 4] = std::array::from_fn(|_| (usize::MAX, vec![0.0; stride]));
    let mut src = vec![[0.0f64; 3]; w];
    let mut out = Vec::with_capacity(ow * oh * 3);
    for oy in 0..oh {
        let idx = yt.index[oy];
        for &y in &idx {
            let slot = &mut ring[y % 4];
            if slot.0 == y {
                continue;
            }
            for (p, s) in img.pixels[y * w * 3..(y + 1) * w * 3]
                .chunks_exact(3)
                .zip(src.iter_mut())
            {
                *s = [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])];
            }
            for ((o, ix), wt) in slot.1.chunks_exact_mut(3).zip(&xt.index).zip(&xt.weight) {
                let (p0, p1, p2, p3) = (src[ix[0]], src[ix[1]], src[ix[2]], src[ix[3]]);
                for c in 0..3 {
                    o[c] = wt[0] * p0[c] + wt[1] * p1[c] + wt[2] * p2[c] + wt[3] * p3[c];
                }
            }
            slot.0 = y;
        }
        let [w0, w1, w2, w3] = yt.weight[oy];
        let row = |k: usize| &ring[idx[k] % 4].1;
        let taps = row(0).iter().zip(row(1)).zip(row(2).iter().zip(row(3)));
        out.extend(taps.map(|((a, b), (c, d))| round_to_u8(w0 * a + w1 * b + w2 * c + w3 * d)));
    }
    RasterImage::new(ow as u32, oh as u32, out)
}
