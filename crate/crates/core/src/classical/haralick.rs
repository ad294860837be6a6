//! Gray-level co-occurrence matrices and the 13 Haralick statistics.

pub const LEVELS: usize = 32;

pub const NAMES: [&str; 13] = [
    "asm",
    "contrast",
    "correlation",
    "variance",
    "idm",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "imc1",
    "imc2",
];

/// `(dx, dy)` for 0, 45, 90 and 135 degrees at distance 1.
pub const OFFSETS: [(i64, i64); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

/// Symmetric co-occurrence counts for one offset, normalised to sum 1.
/// Returns `None` when no pixel pair fits the window.
pub fn glcm(levels: &[u8], w: usize, h: usize, n: usize, offset: (i64, i64)) -> Option<Vec<f64>> {
    let mut m = vec![0.0f64; n * n];
    let mut total = 0.0;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (nx, ny) = (x + offset.0, y + offset.1);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let a = levels[(y * w as i64 + x) as usize] as usize;
            let b = levels[(ny * w as i64 + nx) as usize] as usize;
            m[a * n + b] += 1.0;
            m[b * n + a] += 1.0;
            total += 2.0;
        }
    }
    if total == 0.0 {
        return None;
    }
    for v in &mut m {
        *v /= total;
    }
    Some(m)
}

/// Mean of the four directional matrices.
pub fn mean_glcm(levels: &[u8], w: usize, h: usize, n: usize) -> Option<Vec<f64>> {
    let mats: Vec<Vec<f64>> = OFFSETS.iter().filter_map(|&o| glcm(levels, w, h, n, o)).collect();
    if mats.is_empty() {
        return None;
    }
    let k = mats.len() as f64;
    Some(
        (0..n * n)
            .map(|i| mats.iter().map(|m| m[i]).sum::<f64>() / k)
            .collect(),
    )
}

fn entropy(p: impl Iterator<Item = f64>) -> f64 {
    -p.filter(|&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>()
}

/// The 13 statistics of a normalised `n x n` co-occurrence matrix, using
/// 0-based gray levels and base-2 logarithms. Zero variance gives
/// correlation 1 and information measures 0.
pub fn statistics(p: &[f64], n: usize) -> [f64; 13] {
    let px: Vec<f64> = (0..n).map(|i| (0..n).map(|j| p[i * n + j]).sum()).collect();
    let mu: f64 = px.iter().enumerate().map(|(i, &v)| i as f64 * v).sum();
    let var: f64 = px.iter().enumerate().map(|(i, &v)| (i as f64 - mu).powi(2) * v).sum();
    let mut psum = vec![0.0; 2 * n - 1];
    let mut pdiff = vec![0.0; n];
    let (mut asm, mut contrast, mut idm, mut cross) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let v = p[i * n + j];
            if v == 0.0 {
                continue;
            }
            let d = i.abs_diff(j);
            asm += v * v;
            contrast += (d * d) as f64 * v;
            idm += v / (1.0 + (d * d) as f64);
            cross += i as f64 * j as f64 * v;
            psum[i + j] += v;
            pdiff[d] += v;
        }
    }
    // symmetric matrix: both marginals share mean and variance
    let correlation = if var > 1e-15 { (cross - mu * mu) / var } else { 1.0 };
    let sum_avg: f64 = psum.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
    let sum_var: f64 = psum.iter().enumerate().map(|(k, &v)| (k as f64 - sum_avg).powi(2) * v).sum();
    let sum_ent = entropy(psum.iter().copied());
    let ent = entropy(p.iter().copied());
    let diff_mean: f64 = pdiff.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
    let diff_var: f64 = pdiff.iter().enumerate().map(|(k, &v)| (k as f64 - diff_mean).powi(2) * v).sum();
    let diff_ent = entropy(pdiff.iter().copied());
    let hx = entropy(px.iter().copied());
    let (mut hxy1, mut hxy2) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let q = px[i] * px[j];
            if q > 0.0 {
                let v = p[i * n + j];
                if v > 0.0 {
                    hxy1 -= v * q.log2();
                }
                hxy2 -= q * q.log2();
            }
        }
    }
    let imc1 = if hx > 1e-15 { (ent - hxy1) / hx } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - ent)).exp()).max(0.0).sqrt();
    [
        asm,
        contrast,
        correlation,
        var,
        idm,
        sum_avg,
        sum_var,
        sum_ent,
        ent,
        diff_var,
        diff_ent,
        imc1,
        imc2,
    ]
}

/// Quantises `values` in `[lo, hi]` to `LEVELS` bins.
pub fn quantize(values: &[f32], lo: f32, hi: f32) -> Vec<u8> {
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            ((t * LEVELS as f32) as usize).min(LEVELS - 1) as u8
        })
        .collect()
}

/// Haralick statistics of a quantised window. Windows without any pixel
/// pair fall back to the single-level values.
pub fn haralick_features(levels: &[u8], w: usize, h: usize) -> [f64; 13] {
    match mean_glcm(levels, w, h, LEVELS) {
        Some(p) => statistics(&p, LEVELS),
        None => {
            let mut p = vec![0.0; LEVELS * LEVELS];
            let l = levels.first().copied().unwrap_or(0) as usize;
            p[l * LEVELS + l] = 1.0;
            statistics(&p, LEVELS)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_window() {
        let f = haralick_features(&[7; 16], 4, 4);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[8], 0.0);
        assert_eq!(f[2], 1.0);
        assert_eq!(f[11], 0.0);
        assert_eq!(f[12], 0.0);
    }

    #[test]
    fn glcm_normalised() {
        let lv: Vec<u8> = (0..30).map(|i| (i * 7 % 32) as u8).collect();
        for o in OFFSETS {
            let m = glcm(&lv, 6, 5, LEVELS, o).unwrap();
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantization_range() {
        assert_eq!(quantize(&[0.0, 255.0, 127.9, -3.0], 0.0, 256.0), vec![0, 31, 15, 0]);
    }
}
