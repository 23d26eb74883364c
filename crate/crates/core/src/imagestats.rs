//! Pixel-level confound tooling: grayscale conversion, masked brightness
//! matching, per-pixel sign heatmaps and the fixed face crops.
//!
//! Heatmap PNGs use a linear blue-white-red colormap on 16-bit RGB:
//! -1 is pure blue (0, 0, 65535), 0 is white, +1 is pure red (65535, 0, 0).
//! For v < 0 the channels are (1 + v, 1 + v, 1); for v > 0 they are
//! (1, 1 - v, 1 - v), each scaled by 65535 and rounded.

use std::fmt::Write as _;
use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Luma weights are applied in integer arithmetic on 8-bit channels so that
/// identical pixels always compare equal.
const LUMA_R: u32 = 299;
const LUMA_G: u32 = 587;
const LUMA_B: u32 = 114;
const LUMA_SCALE: f64 = 255_000.0;

pub const CAUSALFACE_SIZE: u32 = 512;
pub const CROP_SIZE: u32 = 432;

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::Image(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Image(format!("pixel {i} outside [0, 1]: {}", pixels[i])));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixel values.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn crop(&self, w: CropWindow) -> Result<GrayImage> {
        let (x0, y0, size) = (w.x as usize, w.y as usize, w.size as usize);
        if x0 + size > self.width || y0 + size > self.height {
            return Err(Error::Image(format!(
                "crop window {w:?} exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut px = Vec::with_capacity(size * size);
        for y in y0..y0 + size {
            px.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + size]);
        }
        GrayImage::new(size, size, px)
    }

    pub fn masked_mean(&self, mask: &FaceMask) -> Result<f64> {
        self.check_mask(mask)?;
        let (mut sum, mut n) = (0.0, 0usize);
        for (p, &m) in self.pixels.iter().zip(&mask.mask) {
            if m {
                sum += p;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Image("face mask is empty".into()));
        }
        Ok(sum / n as f64)
    }

    fn check_mask(&self, mask: &FaceMask) -> Result<()> {
        if (mask.width, mask.height) != (self.width, self.height) {
            return Err(Error::Image(format!(
                "mask {}x{} does not match image {}x{}",
                mask.width, mask.height, self.width, self.height
            )));
        }
        Ok(())
    }

    /// 8-bit grayscale PNG, values rounded to the nearest level.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: Vec<u8> = self.pixels.iter().map(|p| (p * 255.0).round() as u8).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .ok_or_else(|| Error::Image("buffer size mismatch".into()))?;
        img.save(path.as_ref()).map_err(|e| Error::Image(format!("{}: {e}", path.as_ref().display())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl FaceMask {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || mask.len() != width * height {
            return Err(Error::Image("mask size does not match its dimensions".into()));
        }
        Ok(FaceMask { width, height, mask })
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Any nonzero pixel of an image file is inside the face.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = open(path.as_ref())?.to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.pixels().map(|p| p.0[0] > 0).collect())
    }
}

pub fn to_gray(rgb: &RgbImage) -> GrayImage {
    let (w, h) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            (LUMA_R * r as u32 + LUMA_G * g as u32 + LUMA_B * b as u32) as f64 / LUMA_SCALE
        })
        .collect();
    GrayImage {
        width: w as usize,
        height: h as usize,
        pixels,
    }
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Read an 8-bit RGB or grayscale PNG as RGB.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    Ok(open(path.as_ref())?.to_rgb8())
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    Ok(to_gray(&load_rgb(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BrightnessMatch {
    #[serde(skip)]
    pub image: GrayImage,
    pub scale: f64,
    pub target_mean: f64,
    pub achieved_mean: f64,
    /// Masked pixels that saturated at 1 after scaling.
    pub clipped_pixels: usize,
    /// achieved - target; nonzero only when clipping binds.
    pub residual: f64,
}

/// Scale `variant` so its masked mean equals the masked mean of `reference`.
pub fn brightness_match(variant: &GrayImage, reference: &GrayImage, mask: &FaceMask) -> Result<BrightnessMatch> {
    if (variant.width, variant.height) != (reference.width, reference.height) {
        return Err(Error::Image("variant and reference differ in size".into()));
    }
    let target = reference.masked_mean(mask)?;
    let current = variant.masked_mean(mask)?;
    if [target, current].iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::Image("masked mean brightness is zero".into()));
    }
    let scale = target / current;
    let mut clipped = 0;
    let pixels: Vec<f64> = variant
        .pixels
        .iter()
        .zip(&mask.mask)
        .map(|(&p, &m)| {
            let v = p * scale;
            if v > 1.0 {
                if m {
                    clipped += 1;
                }
                1.0
            } else {
                v
            }
        })
        .collect();
    let image = GrayImage {
        width: variant.width,
        height: variant.height,
        pixels,
    };
    let achieved = image.masked_mean(mask)?;
    Ok(BrightnessMatch {
        image,
        scale,
        target_mean: target,
        achieved_mean: achieved,
        clipped_pixels: clipped,
        residual: achieved - target,
    })
}

/// Per-pixel sign counts over image pairs: each pair adds +1 where the first
/// image is brighter, -1 where it is darker.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignHeatmap {
    pub width: usize,
    pub height: usize,
    pub pairs: usize,
    pub counts: Vec<i64>,
}

impl SignHeatmap {
    /// Mean sign in [-1, 1].
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.counts[y * self.width + x] as f64 / self.pairs as f64
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.pairs as f64).collect()
    }

    /// One CSV line per image row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if x > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.value(x, y));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_rgb16(&self) -> ImageBuffer<Rgb<u16>, Vec<u16>> {
        let mut img = ImageBuffer::new(self.width as u32, self.height as u32);
        for (x, y, px) in img.enumerate_pixels_mut() {
            *px = Rgb(diverging_color(self.value(x as usize, y as usize)));
        }
        img
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb16()
            .save(path.as_ref())
            .map_err(|e| Error::Image(format!("{}: {e}", path.as_ref().display())))
    }
}

pub fn diverging_color(v: f64) -> [u16; 3] {
    let v = v.clamp(-1.0, 1.0);
    let q = |c: f64| (c * 65535.0).round() as u16;
    if v < 0.0 {
        [q(1.0 + v), q(1.0 + v), u16::MAX]
    } else {
        [u16::MAX, q(1.0 - v), q(1.0 - v)]
    }
}

pub fn sign_heatmap(pairs: &[(GrayImage, GrayImage)]) -> Result<SignHeatmap> {
    let first = pairs.first().ok_or(Error::EmptySample("heatmap pairs"))?;
    let (w, h) = (first.0.width, first.0.height);
    for (i, (a, b)) in pairs.iter().enumerate() {
        if (a.width, a.height) != (w, h) || (b.width, b.height) != (w, h) {
            return Err(Error::Image(format!("pair {i} does not match {w}x{h}")));
        }
    }
    let mut counts = vec![0i64; w * h];
    counts.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (a, b) in pairs {
            let (ra, rb) = (&a.pixels[y * w..(y + 1) * w], &b.pixels[y * w..(y + 1) * w]);
            for ((c, pa), pb) in row.iter_mut().zip(ra).zip(rb) {
                *c += match pa.partial_cmp(pb) {
                    Some(std::cmp::Ordering::Greater) => 1,
                    Some(std::cmp::Ordering::Less) => -1,
                    _ => 0,
                };
            }
        }
    });
    Ok(SignHeatmap {
        width: w,
        height: h,
        pairs: pairs.len(),
        counts,
    })
}

/// Square crop window, `x..x+size` by `y..y+size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CropWindow {
    pub x: u32,
    pub y: u32,
    pub size: u32,
}

/// 432x432 window for a 512x512 face; side poses shift horizontally.
pub fn causalface_crop_window(width: u32, height: u32, pose: Option<f64>) -> Result<CropWindow> {
    if (width, height) != (CAUSALFACE_SIZE, CAUSALFACE_SIZE) {
        return Err(Error::Image(format!("expected a 512x512 image, got {width}x{height}")));
    }
    let x = match pose {
        Some(p) if p < 0.0 => 0,
        Some(p) if p > 0.0 => CAUSALFACE_SIZE - CROP_SIZE,
        _ => 40,
    };
    Ok(CropWindow { x, y: 0, size: CROP_SIZE })
}

pub fn crop_causalface(img: &RgbImage, pose: Option<f64>) -> Result<RgbImage> {
    let w = causalface_crop_window(img.width(), img.height(), pose)?;
    Ok(image::imageops::crop_imm(img, w.x, w.y, w.size, w.size).to_image())
}
