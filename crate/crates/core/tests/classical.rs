use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcs_core::classical::features::{extract_features, feature_names, FEATURE_COUNT};
use sdcs_core::classical::haralick::{glcm, mean_glcm, statistics, OFFSETS};
use sdcs_core::classical::intensity::{intensity_features, moments};
use sdcs_core::classical::morphology::{distance_transform, fill_holes, otsu_threshold, watershed};
use sdcs_core::classical::segment::{segment, SegmentParams};
use sdcs_core::classical::shape::nuclear_features;
use sdcs_core::classical::stain::{od_from_rgb, rgb_from_od, stain_deconvolve, StainMatrix};
use sdcs_core::classical::zernike::{orders, zernike_features};
use sdcs_core::raster::RasterImage;
use sdcs_core::synth::{generate_tile, SceneConfig};

/// Exhaustive Otsu in exact integer arithmetic. The between-class variance
/// is proportional to `(w1*s0 - w0*s1)^2 / (w0*w1)`; candidates are compared
/// by cross-multiplication.
fn otsu_oracle(hist: &[u64; 256]) -> u8 {
    let total: u128 = hist.iter().map(|&c| c as u128).sum();
    let sum: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let mut best: Option<(u128, u128, u8)> = None;
    for t in 0..256usize {
        let w0: u128 = hist[..=t].iter().map(|&c| c as u128).sum();
        let s0: u128 = hist[..=t].iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
        let (w1, s1) = (total - w0, sum - s0);
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let d = (w1 * s0).abs_diff(w0 * s1);
        let (num, den) = (d * d, w0 * w1);
        match best {
            Some((bn, bd, _)) if num * bd <= bn * den => {}
            _ => best = Some((num, den, t as u8)),
        }
    }
    best.map_or(0, |b| b.2)
}

#[test]
fn otsu_matches_exhaustive_search_on_random_histograms() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let mut hist = [0u64; 256];
        let bins = rng.random_range(2..=40);
        for _ in 0..bins {
            hist[rng.random_range(0..256)] += rng.random_range(1..500);
        }
        assert_eq!(otsu_threshold(&hist), otsu_oracle(&hist), "case {case}");
    }
}

#[test]
fn otsu_splits_two_spikes() {
    let mut hist = [0u64; 256];
    hist[40] = 100;
    hist[200] = 100;
    let t = otsu_threshold(&hist);
    assert!((40..200).contains(&(t as usize)));
    assert_eq!(t, otsu_oracle(&hist));
}

fn checkerboard(n: usize) -> Vec<u8> {
    (0..n * n).map(|i| ((i % n + i / n) % 2) as u8).collect()
}

#[test]
fn checkerboard_glcm_matches_hand_count() {
    let img = checkerboard(8);
    // horizontal and vertical neighbours always differ
    for off in [(1, 0), (0, -1)] {
        assert_eq!(glcm(&img, 8, 8, 2, off).unwrap(), vec![0.0, 0.5, 0.5, 0.0]);
    }
    // 49 diagonal pairs, all same-coloured: 24 start on 0 at 45 degrees,
    // 25 at 135 degrees
    let g45 = glcm(&img, 8, 8, 2, (1, -1)).unwrap();
    assert_eq!(g45, vec![24.0 / 49.0, 0.0, 0.0, 25.0 / 49.0]);
    let g135 = glcm(&img, 8, 8, 2, (-1, -1)).unwrap();
    assert_eq!(g135, vec![25.0 / 49.0, 0.0, 0.0, 24.0 / 49.0]);

    let mean = mean_glcm(&img, 8, 8, 2).unwrap();
    for v in &mean {
        assert!((v - 0.25).abs() < 1e-15);
    }
    let s = statistics(&mean, 2);
    assert!((s[0] - 0.25).abs() < 1e-12, "asm {}", s[0]);
    assert!((s[1] - 0.5).abs() < 1e-12, "contrast {}", s[1]);
    assert!(s[2].abs() < 1e-12, "correlation {}", s[2]);
    assert!((s[8] - 2.0).abs() < 1e-12, "entropy {}", s[8]);
    assert_eq!(OFFSETS.len(), 4);
}

#[test]
fn stripes_have_perfect_vertical_correlation() {
    // columns alternate 0/1: vertical pairs identical, horizontal opposite
    let img: Vec<u8> = (0..36).map(|i| (i % 6 % 2) as u8).collect();
    let v = glcm(&img, 6, 6, 2, (0, -1)).unwrap();
    assert_eq!(v, vec![0.5, 0.0, 0.0, 0.5]);
    assert!((statistics(&v, 2)[2] - 1.0).abs() < 1e-12);
    let hz = glcm(&img, 6, 6, 2, (1, 0)).unwrap();
    assert!((statistics(&hz, 2)[2] + 1.0).abs() < 1e-12);
}

fn disk(cx: f64, cy: f64, r: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..(cy + r + 2.0) as usize {
        for x in 0..(cx + r + 2.0) as usize {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                out.push((x, y));
            }
        }
    }
    out
}

fn rotate90(pixels: &[(usize, usize)], size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = pixels.iter().map(|&(x, y)| (size - 1 - y, x)).collect();
    out.sort_by_key(|&(x, y)| (y, x));
    out
}

#[test]
fn zernike_count_and_rotation_invariance() {
    assert_eq!(orders().len(), 49);
    // an asymmetric blob: ellipse plus a bump
    let mut blob: Vec<(usize, usize)> = Vec::new();
    for y in 0..40usize {
        for x in 0..40usize {
            let (dx, dy) = (x as f64 - 18.0, y as f64 - 20.0);
            let ellipse = (dx / 12.0).powi(2) + (dy / 7.0).powi(2) <= 1.0;
            let bump = (x as f64 - 28.0).powi(2) + (y as f64 - 14.0).powi(2) <= 16.0;
            if ellipse || bump {
                blob.push((x, y));
            }
        }
    }
    let a = zernike_features(&blob).unwrap();
    let b = zernike_features(&rotate90(&blob, 40)).unwrap();
    assert_eq!(a.len(), 49);
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        let rel = (x - y).abs() / x.abs().max(1e-3);
        assert!(rel <= 1e-3, "order {:?}: {x} vs {y}", orders()[i]);
    }
    assert!((a[0] - 1.0 / std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn zernike_of_disk_has_no_angular_content() {
    let z = zernike_features(&disk(30.0, 30.0, 20.0)).unwrap();
    for ((n, m), v) in orders().into_iter().zip(&z) {
        if m > 0 && m % 4 != 0 {
            assert!(*v < 1e-3, "Z({n},{m}) = {v}");
        }
    }
}

fn two_pass(values: &[f64]) -> [f64; 5] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let skew = values.iter().map(|v| ((v - mean) / sd).powi(3)).sum::<f64>() / n;
    let kurt = values.iter().map(|v| ((v - mean) / sd).powi(4)).sum::<f64>() / n - 3.0;
    [mean, sd, var, skew, kurt]
}

#[test]
fn intensity_statistics_match_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut img = RasterImage::new(20, 20);
    for y in 0..20 {
        for x in 0..20 {
            img.put(x, y, [rng.random(), rng.random_range(50..90), rng.random_range(0..=255)]);
        }
    }
    let pixels = disk(9.0, 9.0, 7.0);
    let f = intensity_features(&img, &pixels);
    for c in 0..3 {
        let v: Vec<f64> = pixels.iter().map(|&(x, y)| img.get(x, y)[c] as f64).collect();
        let o = two_pass(&v);
        for k in 0..5 {
            assert!((f[c * 5 + k] - o[k]).abs() <= 1e-9, "channel {c} stat {k}: {} vs {}", f[c * 5 + k], o[k]);
        }
    }
    let skewed = [1.0, 1.0, 1.0, 1.0, 10.0];
    let m = moments(&skewed);
    let o = two_pass(&skewed);
    for k in 0..5 {
        assert!((m[k] - o[k]).abs() <= 1e-9);
    }
}

#[test]
fn distance_transform_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (w, h) = (23, 17);
    let mask: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.8)).collect();
    let dt = distance_transform(&mask, w, h);
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            for yy in -1..=h as i64 {
                for xx in -1..=w as i64 {
                    let inside = xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64;
                    if inside && mask[yy as usize * w + xx as usize] {
                        continue;
                    }
                    best = best.min(((xx - x as i64).pow(2) + (yy - y as i64).pow(2)) as f64);
                }
            }
            let expect = if mask[y * w + x] { best.sqrt() } else { 0.0 };
            assert!((dt[y * w + x] as f64 - expect).abs() < 1e-5, "({x},{y})");
        }
    }
}

#[test]
fn fill_holes_closes_ring() {
    let (w, h) = (9, 9);
    let mask: Vec<bool> = (0..81)
        .map(|i| {
            let (x, y) = (i % 9, i / 9);
            (2..=6).contains(&x) && (2..=6).contains(&y) && !(x == 4 && y == 4)
        })
        .collect();
    let filled = fill_holes(&mask, w, h);
    assert!(filled[4 * 9 + 4]);
    assert_eq!(filled.iter().filter(|&&v| v).count(), 25);
}

#[test]
fn watershed_splits_touching_disks() {
    let (w, h) = (60, 40);
    let mut mask = vec![false; w * h];
    for (x, y) in disk(20.0, 20.0, 10.0).into_iter().chain(disk(37.0, 20.0, 10.0)) {
        mask[y * w + x] = true;
    }
    let dt = distance_transform(&mask, w, h);
    let elev: Vec<f32> = dt.iter().map(|d| -d).collect();
    let labels = watershed(&elev, &mask, w, &[20 * w + 20, 20 * w + 37]);
    assert_eq!(labels[20 * w + 15], 1);
    assert_eq!(labels[20 * w + 42], 2);
    for (i, &m) in mask.iter().enumerate() {
        assert_eq!(m, labels[i] > 0);
    }
    // the split runs through the neck at x = 28 or 29
    for y in 14..27 {
        for x in 0..28 {
            if mask[y * w + x] {
                assert_eq!(labels[y * w + x], 1, "({x},{y})");
            }
        }
    }
}

#[test]
fn nuclear_features_of_disk_and_ellipse() {
    let d = nuclear_features(&disk(20.0, 20.0, 12.0)).unwrap();
    let area = d[2];
    assert!((area - std::f64::consts::PI * 144.0).abs() / area < 0.03);
    assert!(d[5] < 0.15, "disk eccentricity {}", d[5]);
    assert!((d[3] - d[4]).abs() < 0.5);
    // major axis 4 sqrt(lambda) is the diameter of a filled disk
    assert!((d[3] - 24.0).abs() < 1.0, "major {}", d[3]);
    // staircase contours run a few percent long, so digital disks stay below 1
    assert!(d[9] > 0.8 && d[9] < 1.0, "roundedness {}", d[9]);

    let mut ell = Vec::new();
    for y in 0..30usize {
        for x in 0..50usize {
            if ((x as f64 - 25.0) / 20.0).powi(2) + ((y as f64 - 15.0) / 8.0).powi(2) <= 1.0 {
                ell.push((x, y));
            }
        }
    }
    let e = nuclear_features(&ell).unwrap();
    assert!((e[3] / e[4] - 2.5).abs() < 0.1, "axis ratio {}", e[3] / e[4]);
    assert!(e[6].abs() < 1e-9, "orientation {}", e[6]);
    assert!(nuclear_features(&[(0, 0), (1, 0)]).is_none());
}

#[test]
fn stain_roundtrip_is_close() {
    let stains = StainMatrix::default();
    for (h, d) in [(0.2, 0.0), (0.5, 0.3), (0.0, 0.7)] {
        let rgb = rgb_from_od(stains.mix(h, d));
        let c = stains.concentrations(od_from_rgb(rgb));
        assert!((c[0] - h).abs() < 0.03 && (c[1] - d).abs() < 0.03, "{h} {d} -> {c:?}");
    }
}

#[test]
fn features_on_synthetic_tile_are_finite_and_complete() {
    let (img, _) = generate_tile(&SceneConfig {
        seed: 9,
        ..SceneConfig::default()
    })
    .unwrap();
    let ch = stain_deconvolve(&img, &StainMatrix::default());
    let seg = segment(&ch, &SegmentParams::default());
    assert!(seg.nuclei.len() > 30);
    assert_eq!(feature_names().len(), FEATURE_COUNT);
    for n in seg.nuclei.iter().take(10) {
        let f = extract_features(&ch, n).unwrap();
        assert_eq!(f.len(), FEATURE_COUNT);
        assert!(f.iter().all(|v| v.is_finite()));
    }
}
