//! Per-channel intensity statistics over a mask.

use crate::raster::RasterImage;

pub const STATS: [&str; 5] = ["mean", "std", "var", "skew", "kurt"];

/// Population mean, std, variance, skewness and excess kurtosis. Zero
/// variance yields zero for the higher moments.
pub fn moments(values: &[f64]) -> [f64; 5] {
    let n = values.len() as f64;
    if values.is_empty() {
        return [0.0; 5];
    }
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 <= 1e-12 * (1.0 + mean * mean) {
        return [mean, 0.0, 0.0, 0.0, 0.0];
    }
    let sd = m2.sqrt();
    [mean, sd, m2, m3 / (sd * m2), m4 / (m2 * m2) - 3.0]
}

/// R, G and B statistics in that order.
pub fn intensity_features(rgb: &RasterImage, pixels: &[(usize, usize)]) -> [f64; 15] {
    let mut out = [0.0; 15];
    for c in 0..3 {
        let v: Vec<f64> = pixels.iter().map(|&(x, y)| rgb.get(x, y)[c] as f64).collect();
        out[c * 5..c * 5 + 5].copy_from_slice(&moments(&v));
    }
    out
}
