//! Zernike moment magnitudes of a binary mask.

use std::f64::consts::PI;

pub const MAX_DEGREE: usize = 12;

/// `(n, m)` pairs with `n <= MAX_DEGREE`, `0 <= m <= n`, `n - m` even,
/// ordered by `n` then `m`.
pub fn orders() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for n in 0..=MAX_DEGREE {
        for m in (n % 2..=n).step_by(2) {
            out.push((n, m));
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Radial polynomial `R_nm(rho)`.
pub fn radial(n: usize, m: usize, rho: f64) -> f64 {
    (0..=(n - m) / 2)
        .map(|s| {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(n - s)
                / (factorial(s) * factorial((n + m) / 2 - s) * factorial((n - m) / 2 - s))
                * rho.powi((n - 2 * s) as i32)
        })
        .sum()
}

/// `|Z_nm|` for every order in [`orders`]. The mask is centred on its
/// centroid and scaled so the farthest pixel centre lies half a pixel
/// inside the unit circle; pixel weights are normalised to sum 1, giving
/// `|Z_00| = 1 / pi`. Returns `None` for an empty mask.
pub fn zernike_features(pixels: &[(usize, usize)]) -> Option<Vec<f64>> {
    if pixels.is_empty() {
        return None;
    }
    let n = pixels.len() as f64;
    let cx = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cy = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let radius = pixels
        .iter()
        .map(|&(x, y)| ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt())
        .fold(0.0, f64::max)
        + 0.5;
    let polar: Vec<(f64, f64)> = pixels
        .iter()
        .map(|&(x, y)| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            ((dx * dx + dy * dy).sqrt() / radius, dy.atan2(dx))
        })
        .collect();
    Some(
        orders()
            .into_iter()
            .map(|(deg, m)| {
                let (mut re, mut im) = (0.0, 0.0);
                for &(rho, theta) in &polar {
                    let r = radial(deg, m, rho);
                    re += r * (m as f64 * theta).cos();
                    im -= r * (m as f64 * theta).sin();
                }
                (deg as f64 + 1.0) / PI * (re * re + im * im).sqrt() / n
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forty_nine_orders() {
        assert_eq!(orders().len(), 49);
        assert_eq!(orders()[0], (0, 0));
        assert_eq!(*orders().last().unwrap(), (12, 12));
    }

    #[test]
    fn radial_known_values() {
        // R_20 = 2 rho^2 - 1, R_40 = 6 rho^4 - 6 rho^2 + 1
        for rho in [0.0, 0.3, 0.7, 1.0] {
            assert!((radial(2, 0, rho) - (2.0 * rho * rho - 1.0)).abs() < 1e-12);
            assert!((radial(4, 0, rho) - (6.0 * rho.powi(4) - 6.0 * rho * rho + 1.0)).abs() < 1e-12);
            assert!((radial(3, 3, rho) - rho.powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mask() {
        assert!(zernike_features(&[]).is_none());
    }
}
