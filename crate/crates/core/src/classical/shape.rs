//! Shape measurements of a binary nucleus mask.

use std::collections::HashSet;
use std::f64::consts::PI;

pub const NAMES: [&str; 11] = [
    "perimeter_distance_mean",
    "perimeter_distance_std",
    "area",
    "major_axis",
    "minor_axis",
    "eccentricity",
    "orientation",
    "hu1",
    "hu2",
    "roundedness",
    "perimeter",
];

/// Central second moments `(mu20, mu02, mu11) / area` and the centroid.
fn moments(pixels: &[(usize, usize)]) -> ((f64, f64), f64, f64, f64) {
    let n = pixels.len() as f64;
    let cx = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cy = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for &(x, y) in pixels {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        a += dx * dx;
        b += dy * dy;
        c += dx * dy;
    }
    ((cx, cy), a / n, b / n, c / n)
}

/// First two Hu invariants from normalised central moments.
pub fn hu_moments(pixels: &[(usize, usize)]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let (_, m20, m02, m11) = moments(pixels);
    // second-order eta = mu / area^2, and mu = area * m
    let (e20, e02, e11) = (m20 / n, m02 / n, m11 / n);
    (e20 + e02, (e20 - e02).powi(2) + 4.0 * e11 * e11)
}

/// Length of the half-level contour of the mask by marching squares.
pub fn contour_length(pixels: &[(usize, usize)]) -> f64 {
    let set: HashSet<(i64, i64)> = pixels.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    let x0 = pixels.iter().map(|p| p.0 as i64).min().unwrap_or(0) - 1;
    let x1 = pixels.iter().map(|p| p.0 as i64).max().unwrap_or(0) + 1;
    let y0 = pixels.iter().map(|p| p.1 as i64).min().unwrap_or(0) - 1;
    let y1 = pixels.iter().map(|p| p.1 as i64).max().unwrap_or(0) + 1;
    let diag = 0.5f64.sqrt();
    let mut total = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            let tl = set.contains(&(x, y));
            let tr = set.contains(&(x + 1, y));
            let bl = set.contains(&(x, y + 1));
            let br = set.contains(&(x + 1, y + 1));
            let count = [tl, tr, bl, br].iter().filter(|&&v| v).count();
            total += match count {
                1 | 3 => diag,
                2 if tl == br => 2.0 * diag,
                2 => 1.0,
                _ => 0.0,
            };
        }
    }
    total
}

/// The 11 shape values in [`NAMES`] order; `None` below 5 pixels.
pub fn nuclear_features(pixels: &[(usize, usize)]) -> Option<[f64; 11]> {
    if pixels.len() < 5 {
        return None;
    }
    let set: HashSet<(usize, usize)> = pixels.iter().copied().collect();
    let ((cx, cy), m20, m02, m11) = moments(pixels);
    let boundary: Vec<f64> = pixels
        .iter()
        .filter(|&&(x, y)| {
            x == 0
                || y == 0
                || !set.contains(&(x - 1, y))
                || !set.contains(&(x + 1, y))
                || !set.contains(&(x, y - 1))
                || !set.contains(&(x, y + 1))
        })
        .map(|&(x, y)| ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt())
        .collect();
    let bn = boundary.len() as f64;
    let dmean = boundary.iter().sum::<f64>() / bn;
    let dstd = (boundary.iter().map(|d| (d - dmean).powi(2)).sum::<f64>() / bn).sqrt();
    let half_trace = (m20 + m02) / 2.0;
    let root = (((m20 - m02) / 2.0).powi(2) + m11 * m11).sqrt();
    let (l1, l2) = (half_trace + root, (half_trace - root).max(0.0));
    let major = 4.0 * l1.sqrt();
    let minor = 4.0 * l2.sqrt();
    let ecc = if l1 > 0.0 { (1.0 - l2 / l1).max(0.0).sqrt() } else { 0.0 };
    let orientation = 0.5 * (2.0 * m11).atan2(m20 - m02);
    let (hu1, hu2) = hu_moments(pixels);
    let area = pixels.len() as f64;
    let perimeter = contour_length(pixels);
    let round = 4.0 * PI * area / (perimeter * perimeter);
    Some([dmean, dstd, area, major, minor, ecc, orientation, hu1, hu2, round, perimeter])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_contour() {
        // a 3x3 block: straight edges of length 2 per side plus 4 corner cuts
        let px: Vec<(usize, usize)> = (0..9).map(|i| (5 + i % 3, 5 + i / 3)).collect();
        let expect = 4.0 * 2.0 + 4.0 * 0.5f64.sqrt();
        assert!((contour_length(&px) - expect).abs() < 1e-12);
    }

    #[test]
    fn too_small() {
        assert!(nuclear_features(&[(0, 0), (1, 0)]).is_none());
    }
}
