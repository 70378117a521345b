//! Single-channel intensity rasters, bilinear resampling and binary PGM I/O.
//!
//! Intensities live in `[0, 1]` in memory; 8-bit quantization only happens
//! when reading or writing files. Sampling uses the pixel-center convention:
//! pixel `i` covers `[i, i + 1)` and its value sits at `i + 0.5`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    Missing(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a binary PGM: magic number {0:?}")]
    BadMagic(String),
    #[error("unsupported maxval {0}, expected 255")]
    BadMaxval(u32),
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("box {bbox:?} lies outside the {width}x{height} image")]
    BoxOutside {
        bbox: BBox,
        width: usize,
        height: usize,
    },
}

/// Axis-aligned box in pixel units, top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Positive, finite extent.
    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.is_valid()
            && self.x >= 0.0
            && self.y >= 0.0
            && self.right() <= width as f64
            && self.bottom() <= height as f64
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let iy = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        let inter = ix * iy;
        let union = self.w * self.h + other.w * other.h - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// `[x, y, w, h]`, the manifest and wire representation.
    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Row-major grayscale raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image, clamping every intensity into `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, mut pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid(format!("zero dimension {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(ImageError::Invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        for p in pixels.iter_mut() {
            if p.is_nan() {
                return Err(ImageError::Invalid("NaN intensity".into()));
            }
            *p = p.clamp(0.0, 1.0);
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        Self {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn contains(&self, bbox: &BBox) -> bool {
        bbox.fits_in(self.width, self.height)
    }

    pub fn check_box(&self, bbox: &BBox) -> Result<(), ImageError> {
        if self.contains(bbox) {
            Ok(())
        } else {
            Err(ImageError::BoxOutside {
                bbox: *bbox,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Bilinear sample at continuous coordinates, pixel-center convention,
    /// edge pixels replicated.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(x, y, self.width, self.height, |i, j| self.get(i, j))
    }

    /// Quantizes to 8 bits, round-half-up.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        let pixels = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::from_pixels(width, height, pixels)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Bilinear interpolation on a `width x height` lattice addressed through
/// `fetch`. Coordinates are continuous, so pixel `i` is sampled exactly at
/// `i + 0.5`; reads beyond the border replicate the edge.
#[inline]
pub(crate) fn bilinear(x: f64, y: f64, width: usize, height: usize, fetch: impl Fn(usize, usize) -> f64) -> f64 {
    let fx = (x - 0.5).clamp(0.0, (width - 1) as f64);
    let fy = (y - 0.5).clamp(0.0, (height - 1) as f64);
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let top = if tx == 0.0 {
        fetch(x0, y0)
    } else {
        fetch(x0, y0) * (1.0 - tx) + fetch(x1, y0) * tx
    };
    if ty == 0.0 {
        return top;
    }
    let bottom = if tx == 0.0 {
        fetch(x0, y1)
    } else {
        fetch(x0, y1) * (1.0 - tx) + fetch(x1, y1) * tx
    };
    top * (1.0 - ty) + bottom * ty
}

/// Read access to a grayscale frame that may be computed on demand.
pub trait PixelSource: Sync {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn pixel(&self, x: usize, y: usize) -> f64;

    fn contains(&self, bbox: &BBox) -> bool {
        bbox.fits_in(self.width(), self.height())
    }

    fn check_box(&self, bbox: &BBox) -> Result<(), ImageError> {
        if self.contains(bbox) {
            Ok(())
        } else {
            Err(ImageError::BoxOutside {
                bbox: *bbox,
                width: self.width(),
                height: self.height(),
            })
        }
    }
}

impl PixelSource for GrayImage {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn pixel(&self, x: usize, y: usize) -> f64 {
        self.get(x, y)
    }
}

/// Evaluates every pixel of `src` into an owned image.
pub fn materialize(src: &(impl PixelSource + ?Sized)) -> GrayImage {
    GrayImage::from_fn(src.width(), src.height(), |x, y| src.pixel(x, y))
}

/// Bilinear resampling of `bbox` to `out_w x out_h`. Sample positions are
/// clamped to the pixels the box touches, so outputs stay within the
/// source region's intensity range.
pub fn crop_resize(image: &GrayImage, bbox: &BBox, out_w: usize, out_h: usize) -> Result<GrayImage, ImageError> {
    let pixels = crop_resize_source(image, bbox, out_w, out_h)?;
    GrayImage::from_pixels(out_w, out_h, pixels)
}

/// [`crop_resize`] over any pixel source, returning row-major samples.
pub fn crop_resize_source(
    src: &(impl PixelSource + ?Sized),
    bbox: &BBox,
    out_w: usize,
    out_h: usize,
) -> Result<Vec<f64>, ImageError> {
    src.check_box(bbox)?;
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::Invalid(format!("output size {out_w}x{out_h}")));
    }
    let (width, height) = (src.width(), src.height());
    let lo_x = bbox.x.floor();
    let hi_x = ((bbox.right().ceil() as usize).min(width) - 1) as f64;
    let lo_y = bbox.y.floor();
    let hi_y = ((bbox.bottom().ceil() as usize).min(height) - 1) as f64;
    let sx = bbox.w / out_w as f64;
    let sy = bbox.h / out_h as f64;
    let fetch = |i: usize, j: usize| src.pixel(i, j);
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for j in 0..out_h {
        let fy = (bbox.y + (j as f64 + 0.5) * sy - 0.5).clamp(lo_y, hi_y.max(lo_y));
        for i in 0..out_w {
            let fx = (bbox.x + (i as f64 + 0.5) * sx - 0.5).clamp(lo_x, hi_x.max(lo_x));
            pixels.push(bilinear(fx + 0.5, fy + 0.5, width, height, fetch).clamp(0.0, 1.0));
        }
    }
    Ok(pixels)
}

fn io_err(path: &Path, source: io::Error) -> ImageError {
    if source.kind() == io::ErrorKind::NotFound {
        ImageError::Missing(path.to_path_buf())
    } else {
        ImageError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Parses a binary (P5) PGM with maxval 255. `#` comments in the header are
/// skipped.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage, ImageError> {
    if data.len() < 2 || &data[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&data[..data.len().min(2)]).into_owned();
        return Err(ImageError::BadMagic(magic));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match data.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = data.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while data.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            let what = ["width", "height", "maxval"][k];
            return Err(ImageError::BadHeader(format!("missing {what}")));
        }
        let text = std::str::from_utf8(&data[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| ImageError::BadHeader(format!("number out of range: {text}")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(ImageError::BadMaxval(maxval));
    }
    // exactly one whitespace byte separates header and raster
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::BadHeader("no whitespace after maxval".into())),
    }
    if width == 0 || height == 0 {
        return Err(ImageError::BadHeader(format!("zero dimension {width}x{height}")));
    }
    let expected = width as usize * height as usize;
    let payload = &data[pos..];
    if payload.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::from_bytes(width as usize, height as usize, &payload[..expected])
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_bytes());
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_pgm(&data)
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&encode_pgm(image)).map_err(|e| io_err(path, e))
}
