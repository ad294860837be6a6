//! Optical-density colour deconvolution into hematoxylin and DAB.

use crate::raster::RasterImage;
use serde::{Deserialize, Serialize};

/// Unit stain vectors in optical-density space, one per row:
/// hematoxylin, DAB and the orthogonal residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StainMatrix {
    pub hematoxylin: [f64; 3],
    pub dab: [f64; 3],
}

impl Default for StainMatrix {
    /// Ruifrok & Johnston H-DAB vectors.
    fn default() -> Self {
        StainMatrix {
            hematoxylin: [0.650, 0.704, 0.286],
            dab: [0.268, 0.570, 0.776],
        }
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl StainMatrix {
    /// Rows `[H, DAB, residual]`, each normalised.
    pub fn rows(&self) -> [[f64; 3]; 3] {
        let h = normalize(self.hematoxylin);
        let d = normalize(self.dab);
        [h, d, normalize(cross(h, d))]
    }

    /// Inverse of [`rows`](Self::rows); `concentrations = od * inverse`.
    pub fn inverse(&self) -> [[f64; 3]; 3] {
        let m = self.rows();
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for (i, row) in inv.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                // adjugate transpose
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                *v = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
            }
        }
        inv
    }

    /// Stain concentrations `[h, dab, residual]` for an OD triple.
    pub fn concentrations(&self, od: [f64; 3]) -> [f64; 3] {
        let inv = self.inverse();
        let mut c = [0.0; 3];
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = od[0] * inv[0][j] + od[1] * inv[1][j] + od[2] * inv[2][j];
        }
        c
    }

    /// OD triple produced by the given stain amounts.
    pub fn mix(&self, hematoxylin: f64, dab: f64) -> [f64; 3] {
        let [h, d, _] = self.rows();
        [
            hematoxylin * h[0] + dab * d[0],
            hematoxylin * h[1] + dab * d[1],
            hematoxylin * h[2] + dab * d[2],
        ]
    }
}

/// Decadic optical density with I0 = 255; zero intensity is clamped to 1.
pub fn od_from_rgb(rgb: [u8; 3]) -> [f64; 3] {
    rgb.map(|v| -((v.max(1) as f64) / 255.0).log10())
}

pub fn rgb_from_od(od: [f64; 3]) -> [u8; 3] {
    od.map(|d| (255.0 * 10f64.powf(-d.max(0.0))).round().clamp(0.0, 255.0) as u8)
}

/// Integer luminance `(299 R + 587 G + 114 B) / 1000`.
pub fn luminance(rgb: [u8; 3]) -> f32 {
    (299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32) as f32 / 1000.0
}

/// Gray, hematoxylin and DAB planes of an RGB tile.
#[derive(Clone, Debug)]
pub struct StainChannels {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<f32>,
    /// Hematoxylin optical density, clamped at zero.
    pub hematoxylin: Vec<f32>,
    /// DAB optical density, clamped at zero.
    pub dab: Vec<f32>,
    pub rgb: RasterImage,
}

pub fn stain_deconvolve(rgb: &RasterImage, stains: &StainMatrix) -> StainChannels {
    let inv = stains.inverse();
    // OD lookup per byte value
    let lut: Vec<f64> = (0..=255u8).map(|v| od_from_rgb([v, v, v])[0]).collect();
    let n = rgb.width() * rgb.height();
    let mut gray = Vec::with_capacity(n);
    let mut hem = Vec::with_capacity(n);
    let mut dab = Vec::with_capacity(n);
    for px in rgb.as_raw().chunks_exact(3) {
        let p = [px[0], px[1], px[2]];
        gray.push(luminance(p));
        let od = [lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]];
        let h = od[0] * inv[0][0] + od[1] * inv[1][0] + od[2] * inv[2][0];
        let d = od[0] * inv[0][1] + od[1] * inv[1][1] + od[2] * inv[2][1];
        hem.push(h.max(0.0) as f32);
        dab.push(d.max(0.0) as f32);
    }
    StainChannels {
        width: rgb.width(),
        height: rgb.height(),
        gray,
        hematoxylin: hem,
        dab,
        rgb: rgb.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_has_zero_density() {
        let img = RasterImage::filled(2, 2, [255, 255, 255]);
        let ch = stain_deconvolve(&img, &StainMatrix::default());
        assert!(ch.hematoxylin.iter().all(|&v| v == 0.0));
        assert!(ch.dab.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_hematoxylin_has_no_dab() {
        let s = StainMatrix::default();
        let od = s.mix(0.5, 0.0);
        let c = s.concentrations(od);
        assert!((c[0] - 0.5).abs() < 1e-6);
        assert!(c[1].abs() < 1e-6);
        assert!(c[2].abs() < 1e-6);
    }

    #[test]
    fn inverse_is_inverse() {
        let s = StainMatrix::default();
        let (m, inv) = (s.rows(), s.inverse());
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gray_of_equal_channels() {
        assert_eq!(luminance([90, 90, 90]), 90.0);
        let ch = stain_deconvolve(&RasterImage::filled(1, 1, [90, 90, 90]), &StainMatrix::default());
        assert_eq!(ch.gray[0], 90.0);
    }

    #[test]
    fn dab_pixel_reads_as_dab() {
        let s = StainMatrix::default();
        let rgb = rgb_from_od(s.mix(0.1, 0.8));
        let c = s.concentrations(od_from_rgb(rgb));
        assert!(c[1] > 0.7 && c[0] < 0.2, "{c:?}");
    }
}
