use serde::{Deserialize, Serialize};

use super::color::saturation;
use super::RasterImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub x: usize,
    pub y: usize,
    pub image: RasterImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileCoord {
    pub x: usize,
    pub y: usize,
}

/// Fraction of pixels in the window whose HSV saturation exceeds `threshold`.
pub fn foreground_fraction(img: &RasterImage, x: usize, y: usize, w: usize, h: usize, threshold: f64) -> f64 {
    let mut hits = 0usize;
    for row in y..y + h {
        for col in x..x + w {
            if saturation(img.pixel(col, row)) > threshold {
                hits += 1;
            }
        }
    }
    hits as f64 / (w * h) as f64
}

/// Non-overlapping `tile × tile` grid anchored at the origin, keeping tiles
/// whose foreground fraction is at least `min_fraction`. Partial tiles at the
/// right and bottom edges are dropped. Tiles are listed row by row.
pub fn tile_image(img: &RasterImage, tile: usize, saturation_threshold: f64, min_fraction: f64) -> Vec<Tile> {
    if tile == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for ty in 0..img.height() / tile {
        for tx in 0..img.width() / tile {
            let (x, y) = (tx * tile, ty * tile);
            if foreground_fraction(img, x, y, tile, tile, saturation_threshold) >= min_fraction {
                out.push(Tile {
                    x,
                    y,
                    image: img.region(x, y, tile, tile),
                });
            }
        }
    }
    out
}
