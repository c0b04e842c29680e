//! Grayscale image container, PGM/PNG input, PGM output and PSNR.
//!
//! Intensities are stored as `f64` in the nominal range `[0, 1]`, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, WimError};

/// Smallest side length accepted by the reconstruction pipeline.
pub const MIN_SIDE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(WimError::InvalidImage("zero-sized image".into()));
        }
        if data.len() != width * height {
            return Err(WimError::InvalidImage(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(WimError::InvalidImage(format!(
                "non-finite sample at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from `f(x, y)` where `x` is the column and `y` the row.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Validates the pipeline invariants: both sides at least [`MIN_SIDE`]
    /// and divisible by `2^levels`.
    pub fn check_levels(&self, levels: usize) -> Result<()> {
        check_dims_for_levels(self.width, self.height, levels)
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(WimError::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `f(self, other)`. Panics on dimension mismatch.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        assert_eq!(self.dims(), other.dims(), "image dimension mismatch");
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Image) -> Image {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Image {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Image {
        self.map(|v| v * s)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }
}

pub(crate) fn check_dims_for_levels(width: usize, height: usize, levels: usize) -> Result<()> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(WimError::InvalidImage(format!(
            "{width}x{height} is smaller than the {MIN_SIDE}x{MIN_SIDE} minimum"
        )));
    }
    if levels == 0 {
        return Err(WimError::InvalidParameter("levels must be >= 1".into()));
    }
    let block = 1usize
        .checked_shl(levels as u32)
        .filter(|b| *b <= width.max(height))
        .ok_or(WimError::NotDivisible {
            width,
            height,
            levels,
        })?;
    if width % block != 0 || height % block != 0 {
        return Err(WimError::NotDivisible {
            width,
            height,
            levels,
        });
    }
    Ok(())
}

/// Loads a grayscale image. Binary PGM (8 or 16 bit) and grayscale PNG are
/// accepted; samples are scaled by the format's maximum value.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| WimError::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    match bytes {
        [b'P', b'5', ..] => decode_pgm(bytes),
        [b'P', b'6', ..] | [b'P', b'3', ..] => Err(WimError::ColorImage("PPM".into())),
        [0x89, b'P', b'N', b'G', ..] => decode_png(bytes),
        [b'P', c, ..] if c.is_ascii_digit() => Err(WimError::UnsupportedFormat(format!(
            "Netpbm P{}; only binary P5 is read",
            *c as char
        ))),
        _ => Err(WimError::UnsupportedFormat("unrecognized file signature".into())),
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = next_header_int(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(WimError::UnsupportedFormat("truncated PGM header".into()));
    }
    pos += 1;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(WimError::UnsupportedFormat(format!(
            "PGM header {width}x{height} maxval {maxval}"
        )));
    }
    let n = width * height;
    let raster = &bytes[pos..];
    let scale = maxval as f64;
    let data: Vec<f64> = if maxval < 256 {
        if raster.len() < n {
            return Err(WimError::UnsupportedFormat("truncated PGM raster".into()));
        }
        raster[..n].iter().map(|&b| b as f64 / scale).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(WimError::UnsupportedFormat("truncated PGM raster".into()));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Image::new(width, height, data)
}

fn next_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(WimError::UnsupportedFormat("truncated PGM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| WimError::UnsupportedFormat("bad PGM header field".into()))
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    use image::DynamicImage;

    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| WimError::UnsupportedFormat(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            return Err(WimError::UnsupportedFormat("grayscale PNG with alpha channel".into()))
        }
        other => return Err(WimError::ColorImage(format!("PNG {:?}", other.color()))),
    };
    Image::new(w, h, data)
}

/// Quantizes to 8 bits: `round(clamp(v, 0, 1) * 255)`, half away from zero.
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data.iter().map(|&v| quantize_u8(v)));
    out
}

/// Writes an 8-bit binary PGM.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| WimError::io(path, e))?;
    file.write_all(&encode_pgm(img))
        .map_err(|e| WimError::io(path, e))
}

pub fn mse(reference: &Image, candidate: &Image) -> Result<f64> {
    reference.ensure_same_dims(candidate)?;
    let sum: f64 = reference
        .data
        .iter()
        .zip(&candidate.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// Peak signal-to-noise ratio in dB with peak 1.0. Identical images give
/// `f64::INFINITY`.
pub fn psnr(reference: &Image, candidate: &Image) -> Result<f64> {
    let mse = mse(reference, candidate)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm8(w: usize, h: usize, px: &[u8]) -> Vec<u8> {
        let mut v = format!("P5\n{w} {h}\n255\n").into_bytes();
        v.extend_from_slice(px);
        v
    }

    #[test]
    fn pgm_extremes_and_midpoint() {
        let ones = decode_image(&pgm8(16, 16, &[255; 256])).unwrap();
        assert!(ones.as_slice().iter().all(|&v| v == 1.0));
        let zeros = decode_image(&pgm8(16, 16, &[0; 256])).unwrap();
        assert!(zeros.as_slice().iter().all(|&v| v == 0.0));
        let mid = decode_image(&pgm8(16, 16, &[128; 256])).unwrap();
        assert_eq!(mid.get(3, 4), 128.0 / 255.0);
        assert!((mid.get(0, 0) - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn pgm_header_comments_and_16_bit() {
        let mut bytes = b"P5\n# made by hand\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x80, 0x00]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.dims(), (2, 1));
        assert_eq!(img.get(0, 0), 1.0);
        assert_eq!(img.get(1, 0), 32768.0 / 65535.0);
    }

    #[test]
    fn rejects_color_and_unknown() {
        assert!(matches!(
            decode_image(b"P6\n1 1\n255\n\0\0\0"),
            Err(WimError::ColorImage(_))
        ));
        assert!(matches!(
            decode_image(b"GIF89a"),
            Err(WimError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_image(b"P2\n1 1\n255\n0"),
            Err(WimError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_image(&pgm8(4, 4, &[0; 10])),
            Err(WimError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn png_gray_accepted_rgb_rejected() {
        let mut buf = Vec::new();
        let gray = image::GrayImage::from_raw(2, 2, vec![0, 128, 255, 64]).unwrap();
        gray.write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Png)
            .unwrap();
        let img = decode_image(&buf).unwrap();
        assert_eq!(img.get(1, 0), 128.0 / 255.0);
        assert_eq!(img.get(0, 1), 1.0);

        let mut buf = Vec::new();
        let rgb = image::RgbImage::from_raw(1, 1, vec![1, 2, 3]).unwrap();
        rgb.write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(decode_image(&buf), Err(WimError::ColorImage(_))));
    }

    #[test]
    fn quantization_rules() {
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(-0.3), 0);
        assert_eq!(quantize_u8(1.7), 255);
        // 0.5 * 255 = 127.5 rounds away from zero
        assert_eq!(quantize_u8(0.5), 128);
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Image::filled(16, 16, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::filled(16, 16, 0.4);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(
            psnr(&a, &Image::zeros(16, 32)),
            Err(WimError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn level_checks() {
        let img = Image::zeros(256, 128);
        assert!(img.check_levels(4).is_ok());
        assert!(img.check_levels(7).is_ok());
        assert!(img.check_levels(8).is_err());
        assert!(Image::zeros(48, 48).check_levels(5).is_err());
        assert!(Image::zeros(8, 8).check_levels(1).is_err());
        assert!(Image::zeros(16, 16).check_levels(0).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Image::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
    }
}
