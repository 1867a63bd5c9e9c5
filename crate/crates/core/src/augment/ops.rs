use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::color::{hsv_to_rgb, luminance, rgb_to_hsv};
use super::RasterImage;

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Copies the `crop × crop` window with top-left corner drawn uniformly.
pub fn random_crop<R: Rng + ?Sized>(img: &RasterImage, crop: usize, rng: &mut R) -> Result<RasterImage> {
    if crop == 0 || crop > img.width() || crop > img.height() {
        return Err(Error::Invalid(format!(
            "crop {crop} does not fit a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let x = rng.gen_range(0..=img.width() - crop);
    let y = rng.gen_range(0..=img.height() - crop);
    Ok(img.region(x, y, crop, crop))
}

pub fn flip_h(img: &RasterImage) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            out.pixel_mut(x, y).copy_from_slice(img.pixel(w - 1 - x, y));
        }
    }
    out
}

pub fn flip_v(img: &RasterImage) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            out.pixel_mut(x, y).copy_from_slice(img.pixel(x, h - 1 - y));
        }
    }
    out
}

/// Maximum deviation of each jitter factor from identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterRanges {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// In turns, at most 0.5.
    pub hue: f64,
}

impl Default for JitterRanges {
    fn default() -> Self {
        Self {
            brightness: 0.15,
            contrast: 0.15,
            saturation: 0.1,
            hue: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterStage {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

/// A concrete jitter draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterParams {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue_shift: f64,
    pub order: [JitterStage; 4],
}

impl JitterParams {
    pub fn identity() -> Self {
        Self {
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue_shift: 0.0,
            order: [
                JitterStage::Brightness,
                JitterStage::Contrast,
                JitterStage::Saturation,
                JitterStage::Hue,
            ],
        }
    }

    /// Factors uniform in `[1 − r, 1 + r]`, hue shift uniform in
    /// `[−hue, hue]`, stage order a uniform permutation. Always consumes the
    /// same number of draws.
    pub fn draw<R: Rng + ?Sized>(ranges: &JitterRanges, rng: &mut R) -> Self {
        let mut factor = |r: f64| 1.0 + r * (2.0 * rng.gen::<f64>() - 1.0);
        let brightness = factor(ranges.brightness);
        let contrast = factor(ranges.contrast);
        let saturation = factor(ranges.saturation);
        let hue_shift = ranges.hue * (2.0 * rng.gen::<f64>() - 1.0);
        let mut order = Self::identity().order;
        order.shuffle(rng);
        Self {
            brightness,
            contrast,
            saturation,
            hue_shift,
            order,
        }
    }
}

fn map_pixels(img: &RasterImage, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> RasterImage {
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        let (r, g, b) = f(px[0] as f64, px[1] as f64, px[2] as f64);
        px[0] = quantize(r);
        px[1] = quantize(g);
        px[2] = quantize(b);
    }
    out
}

pub fn adjust_brightness(img: &RasterImage, f: f64) -> RasterImage {
    map_pixels(img, |r, g, b| (r * f, g * f, b * f))
}

/// Blends toward the image's mean luminance.
pub fn adjust_contrast(img: &RasterImage, f: f64) -> RasterImage {
    let n = (img.width() * img.height()).max(1) as f64;
    let mean = img
        .data()
        .chunks_exact(3)
        .map(|p| luminance(p[0] as f64, p[1] as f64, p[2] as f64))
        .sum::<f64>()
        / n;
    map_pixels(img, |r, g, b| {
        (mean + (r - mean) * f, mean + (g - mean) * f, mean + (b - mean) * f)
    })
}

/// Blends toward each pixel's own luminance.
pub fn adjust_saturation(img: &RasterImage, f: f64) -> RasterImage {
    map_pixels(img, |r, g, b| {
        let l = luminance(r, g, b);
        (l + (r - l) * f, l + (g - l) * f, l + (b - l) * f)
    })
}

/// Rotates HSV hue by `shift` turns, wrapping around.
pub fn adjust_hue(img: &RasterImage, shift: f64) -> RasterImage {
    if shift == 0.0 {
        return img.clone();
    }
    map_pixels(img, |r, g, b| {
        let (h, s, v) = rgb_to_hsv(r, g, b);
        hsv_to_rgb(h + shift, s, v)
    })
}

pub fn apply_jitter(img: &RasterImage, p: &JitterParams) -> RasterImage {
    let mut out = img.clone();
    for stage in p.order {
        out = match stage {
            JitterStage::Brightness => adjust_brightness(&out, p.brightness),
            JitterStage::Contrast => adjust_contrast(&out, p.contrast),
            JitterStage::Saturation => adjust_saturation(&out, p.saturation),
            JitterStage::Hue => adjust_hue(&out, p.hue_shift),
        };
    }
    out
}

pub fn color_jitter<R: Rng + ?Sized>(img: &RasterImage, ranges: &JitterRanges, rng: &mut R) -> RasterImage {
    apply_jitter(img, &JitterParams::draw(ranges, rng))
}

/// Normalized 1-D Gaussian weights, `size` odd, centered.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size.is_multiple_of(2) {
        return Err(Error::Invalid(format!("blur kernel size {size} must be odd")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Invalid(format!("blur sigma {sigma} must be > 0")));
    }
    let r = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}

/// Mirror index without repeating the edge sample (`d c b | a b c d | c b a`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable convolution of a single `width × height` plane with reflect padding.
pub fn convolve_separable(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + k as isize - r, width);
                acc += w * plane[y * width + sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - r, height);
                acc += w * tmp[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

pub fn gaussian_blur(img: &RasterImage, kernel_size: usize, sigma: f64) -> Result<RasterImage> {
    let kernel = gaussian_kernel(kernel_size, sigma)?;
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for c in 0..3 {
        let plane: Vec<f64> = img.data().iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        let blurred = convolve_separable(&plane, w, h, &kernel);
        for (px, v) in out.data_mut().chunks_exact_mut(3).zip(blurred) {
            px[c] = quantize(v);
        }
    }
    Ok(out)
}
