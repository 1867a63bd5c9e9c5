//! Patch preparation on 8-bit RGB rasters: foreground tiling, random crop,
//! flips, color jitter and Gaussian blur. All randomness comes from a
//! caller-supplied generator, so a seed fully determines the output.

mod color;
mod ops;
mod tile;

pub use color::{hsv_to_rgb, luminance, rgb_to_hsv, saturation};
pub use ops::{
    adjust_brightness, adjust_contrast, adjust_hue, adjust_saturation, apply_jitter, color_jitter,
    convolve_separable, flip_h, flip_v, gaussian_blur, gaussian_kernel, random_crop, JitterParams,
    JitterRanges, JitterStage,
};
pub use tile::{foreground_fraction, tile_image, Tile, TileCoord};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interleaved 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{} bytes for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, px: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: px.repeat(width * height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let o = (y * self.width + x) * 3;
        &self.data[o..o + 3]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let o = (y * self.width + x) * 3;
        &mut self.data[o..o + 3]
    }

    /// Copy of the `w × h` window at `(x, y)`; the window must fit.
    pub fn region(&self, x: usize, y: usize, w: usize, h: usize) -> Self {
        assert!(x + w <= self.width && y + h <= self.height, "region out of bounds");
        let mut data = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let o = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[o..o + w * 3]);
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub p_hflip: f64,
    pub p_vflip: f64,
    pub p_jitter: f64,
    pub jitter: JitterRanges,
    pub p_blur: f64,
    pub blur_kernel: usize,
    /// Blur sigma is drawn uniformly from `[blur_sigma_min, blur_sigma_max]`.
    pub blur_sigma_min: f64,
    pub blur_sigma_max: f64,
    pub crop: usize,
    pub tile: usize,
    pub fg_saturation_threshold: f64,
    pub fg_min_fraction: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_hflip: 0.5,
            p_vflip: 0.5,
            p_jitter: 0.5,
            jitter: JitterRanges::default(),
            p_blur: 0.1,
            blur_kernel: 9,
            blur_sigma_min: 0.5,
            blur_sigma_max: 2.0,
            crop: 224,
            tile: 256,
            fg_saturation_threshold: 0.07,
            fg_min_fraction: 0.25,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_hflip", self.p_hflip),
            ("p_vflip", self.p_vflip),
            ("p_jitter", self.p_jitter),
            ("p_blur", self.p_blur),
            ("fg_min_fraction", self.fg_min_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if self.blur_kernel.is_multiple_of(2) {
            return Err(Error::Invalid(format!("blur_kernel {} must be odd", self.blur_kernel)));
        }
        if !(0.0 < self.blur_sigma_min && self.blur_sigma_min <= self.blur_sigma_max) {
            return Err(Error::Invalid("blur sigma range must satisfy 0 < min <= max".into()));
        }
        if self.crop == 0 || self.crop > self.tile {
            return Err(Error::Invalid(format!(
                "crop {} must lie in [1, tile = {}]",
                self.crop, self.tile
            )));
        }
        Ok(())
    }
}

/// Which stochastic stages fired for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub crop_x: usize,
    pub crop_y: usize,
    pub hflip: bool,
    pub vflip: bool,
    pub jitter: Option<JitterParams>,
    pub blur_sigma: Option<f64>,
}

/// Random crop, then horizontal flip, vertical flip, color jitter and blur,
/// each applied independently with its probability.
///
/// Draw order is fixed: crop x, crop y, the four coin flips, the jitter
/// parameters, the blur sigma. Every draw is consumed whether or not its
/// stage fires. The result is meant to be fed to both the teacher and the
/// student so the two see the same view of a sample.
pub fn augment_pipeline<R: Rng + ?Sized>(
    tile: &RasterImage,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<(RasterImage, AugmentRecord)> {
    config.validate()?;
    let crop = config.crop;
    if crop > tile.width() || crop > tile.height() {
        return Err(Error::Invalid(format!(
            "crop {crop} does not fit a {}x{} tile",
            tile.width(),
            tile.height()
        )));
    }
    let crop_x = rng.gen_range(0..=tile.width() - crop);
    let crop_y = rng.gen_range(0..=tile.height() - crop);
    let coins: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
    let jitter = JitterParams::draw(&config.jitter, rng);
    let sigma = rng.gen_range(config.blur_sigma_min..=config.blur_sigma_max);

    let record = AugmentRecord {
        crop_x,
        crop_y,
        hflip: coins[0] < config.p_hflip,
        vflip: coins[1] < config.p_vflip,
        jitter: (coins[2] < config.p_jitter).then_some(jitter),
        blur_sigma: (coins[3] < config.p_blur).then_some(sigma),
    };
    let mut img = tile.region(crop_x, crop_y, crop, crop);
    if record.hflip {
        img = flip_h(&img);
    }
    if record.vflip {
        img = flip_v(&img);
    }
    if let Some(p) = &record.jitter {
        img = apply_jitter(&img, p);
    }
    if let Some(s) = record.blur_sigma {
        img = gaussian_blur(&img, config.blur_kernel, s)?;
    }
    Ok((img, record))
}

/// Generator for sample `index` of a run seeded with `seed`: one ChaCha8
/// stream per sample, so samples can be processed in any order.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
