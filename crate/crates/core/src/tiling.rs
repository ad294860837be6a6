//! Grid tiling of large images and glass/coverslip masking.

use crate::classical::stain::luminance;
use crate::error::{Error, Result};
use crate::raster::RasterImage;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TILE_SIZE: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileManifest {
    pub image_id: String,
    pub origin: (usize, usize),
    /// Actual tile extent; smaller than the nominal size only when the
    /// source itself is smaller.
    pub size: (usize, usize),
    pub tissue_fraction: Option<f64>,
}

/// Tile origins along one axis: multiples of `tile`, the last one pulled
/// back so the tile ends at the image edge.
pub fn tile_origins(len: usize, tile: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..len).step_by(tile).filter(|&o| o + tile <= len).collect();
    if out.last().is_none_or(|&o| o + tile < len) {
        out.push(len - tile);
    }
    out
}

/// Cuts the image into a row-major grid of tiles.
pub fn tile_image(image: &RasterImage, image_id: &str, tile_size: usize) -> Result<Vec<(TileManifest, RasterImage)>> {
    if tile_size == 0 {
        return Err(Error::invalid("tile_image", "tile size must be positive"));
    }
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::invalid("tile_image", "empty image"));
    }
    let tw = tile_size.min(image.width());
    let th = tile_size.min(image.height());
    let mut out = Vec::new();
    for y in tile_origins(image.height(), tile_size) {
        for x in tile_origins(image.width(), tile_size) {
            out.push((
                TileManifest {
                    image_id: image_id.to_string(),
                    origin: (x, y),
                    size: (tw, th),
                    tissue_fraction: None,
                },
                image.crop(x, y, tw, th)?,
            ));
        }
    }
    Ok(out)
}

/// Pastes tiles back at their origins. Overlapping tiles carry identical
/// pixels, so paste order does not matter.
pub fn reassemble(tiles: &[(TileManifest, RasterImage)], width: usize, height: usize) -> Result<RasterImage> {
    let mut out = RasterImage::new(width, height);
    for (m, t) in tiles {
        out.paste(t, m.origin.0, m.origin.1)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TissueMaskParams {
    /// Pixels at least this bright (0..255 luminance) ...
    pub min_glass_luminance: f32,
    /// ... and at most this saturated count as glass.
    pub max_glass_saturation: f32,
}

impl Default for TissueMaskParams {
    fn default() -> Self {
        TissueMaskParams {
            min_glass_luminance: 240.0,
            max_glass_saturation: 0.04,
        }
    }
}

fn saturation([r, g, b]: [u8; 3]) -> f32 {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    if max == 0 {
        0.0
    } else {
        (max - min) as f32 / max as f32
    }
}

/// Tissue mask (true = tissue) and the tissue fraction of the tile.
pub fn tissue_mask(tile: &RasterImage, params: &TissueMaskParams) -> (Vec<bool>, f64) {
    let mut mask = Vec::with_capacity(tile.width() * tile.height());
    for y in 0..tile.height() {
        for x in 0..tile.width() {
            let p = tile.get(x, y);
            let glass = luminance(p) >= params.min_glass_luminance && saturation(p) <= params.max_glass_saturation;
            mask.push(!glass);
        }
    }
    let n = mask.len().max(1);
    let fraction = mask.iter().filter(|&&m| m).count() as f64 / n as f64;
    (mask, fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origins() {
        assert_eq!(tile_origins(2000, 2000), vec![0]);
        assert_eq!(tile_origins(4100, 2000), vec![0, 2000, 2100]);
        assert_eq!(tile_origins(4000, 2000), vec![0, 2000]);
        assert_eq!(tile_origins(500, 2000), vec![0]);
    }

    #[test]
    fn white_is_glass() {
        let (_, f) = tissue_mask(&RasterImage::filled(8, 8, [255, 255, 255]), &TissueMaskParams::default());
        assert_eq!(f, 0.0);
        let (_, f) = tissue_mask(&RasterImage::filled(8, 8, [120, 80, 60]), &TissueMaskParams::default());
        assert_eq!(f, 1.0);
    }
}
