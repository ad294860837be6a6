//! Plane filters, Otsu thresholding, distance transform and watershed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// 3x3 median with edge replication.
pub fn median3x3(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0; w * h];
    let mut buf = [0.0f32; 9];
    for y in 0..h {
        for x in 0..w {
            let mut k = 0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    buf[k] = src[sy * w + sx];
                    k += 1;
                }
            }
            buf.sort_by(f32::total_cmp);
            out[y * w + x] = buf[4];
        }
    }
    out
}

fn extremum3x3(src: &[f32], w: usize, h: usize, max: bool) -> Vec<f32> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut v = src[y * w + x];
            for sy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for sx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let s = src[sy * w + sx];
                    v = if max { v.max(s) } else { v.min(s) };
                }
            }
            out[y * w + x] = v;
        }
    }
    out
}

pub fn dilate3x3(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    extremum3x3(src, w, h, true)
}

pub fn erode3x3(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    extremum3x3(src, w, h, false)
}

/// Dilation minus erosion with a 3x3 square.
pub fn morphological_gradient(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    let d = dilate3x3(src, w, h);
    let e = erode3x3(src, w, h);
    d.iter().zip(&e).map(|(a, b)| a - b).collect()
}

/// Threshold `t` maximising the between-class variance when the classes
/// are `0..=t` and `t+1..=255`. Ties keep the smallest `t`; an empty or
/// single-valued histogram yields 0.
pub fn otsu_threshold(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    let (mut best, mut best_t) = (-1.0f64, 0u8);
    for t in 0..256 {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if var > best {
            best = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Connected components (8-connectivity) of `mask`; 0 marks background,
/// labels start at 1 in raster order of first pixel.
pub fn label_components(mask: &[bool], w: usize, h: usize) -> (Vec<u32>, u32) {
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Sets background regions not 4-connected to the image border.
pub fn fill_holes(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut outside = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && !mask[y * w + x] {
                outside[y * w + x] = true;
                stack.push(y * w + x);
            }
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !mask[j] && !outside[j] {
                outside[j] = true;
                stack.push(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    outside.iter().map(|&o| !o).collect()
}

/// Exact 1-D squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Euclidean distance from every foreground pixel to the nearest
/// background pixel, treating everything outside the image as background.
pub fn distance_transform(mask: &[bool], w: usize, h: usize) -> Vec<f32> {
    // one pixel of background padding on every side
    let (pw, ph) = (w + 2, h + 2);
    let big = 1e12;
    let mut g = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                g[(y + 1) * pw + x + 1] = big;
            }
        }
    }
    let mut col = vec![0.0; ph];
    let mut colo = vec![0.0; ph];
    for x in 0..pw {
        for y in 0..ph {
            col[y] = g[y * pw + x];
        }
        edt_1d(&col, &mut colo);
        for y in 0..ph {
            g[y * pw + x] = colo[y];
        }
    }
    let mut row = vec![0.0; pw];
    let mut out = vec![0.0f32; w * h];
    for y in 1..=h {
        edt_1d(&g[y * pw..(y + 1) * pw], &mut row);
        for x in 1..=w {
            out[(y - 1) * w + x - 1] = row[x].sqrt() as f32;
        }
    }
    out
}

/// Peaks of `dt` whose dynamic (drop needed to reach a higher peak within
/// the foreground) is at least `h`. Each foreground component keeps its
/// highest peak. Returned as pixel indices in descending height.
pub fn h_maxima(dt: &[f32], mask: &[bool], w: usize, h_dyn: f32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dt.len()).filter(|&i| mask[i]).collect();
    order.sort_by(|&a, &b| dt[b].total_cmp(&dt[a]).then(a.cmp(&b)));
    let hgt = dt.len() / w;
    let mut parent: Vec<usize> = (0..dt.len()).collect();
    let mut added = vec![false; dt.len()];
    let mut peak = vec![usize::MAX; dt.len()];
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut markers = Vec::new();
    for &p in &order {
        added[p] = true;
        parent[p] = p;
        peak[p] = p;
        let level = dt[p];
        let (x, y) = (p % w, p / w);
        for ny in y.saturating_sub(1)..=(y + 1).min(hgt - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let q = ny * w + nx;
                if q == p || !added[q] {
                    continue;
                }
                let rp = find(&mut parent, p);
                let rq = find(&mut parent, q);
                if rp == rq {
                    continue;
                }
                let (pa, pb) = (peak[rp], peak[rq]);
                // the component with the higher (earlier) peak survives
                let (keep, lose) = if (dt[pa], std::cmp::Reverse(pa)) >= (dt[pb], std::cmp::Reverse(pb)) {
                    (rp, rq)
                } else {
                    (rq, rp)
                };
                let lost_peak = peak[lose];
                if dt[lost_peak] - level >= h_dyn {
                    markers.push(lost_peak);
                }
                parent[lose] = keep;
            }
        }
    }
    for &p in &order {
        if find(&mut parent, p) == p {
            markers.push(peak[p]);
        }
    }
    markers.sort_by(|&a, &b| dt[b].total_cmp(&dt[a]).then(a.cmp(&b)));
    markers
}

#[derive(PartialEq)]
struct Item {
    elevation: f32,
    seq: u64,
    index: usize,
    label: u32,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (elevation, seq)
        other
            .elevation
            .total_cmp(&self.elevation)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Marker-controlled flooding of `elevation` restricted to `mask`
/// (8-connectivity). Marker `i` receives label `i + 1`; foreground pixels
/// unreachable from any marker stay 0.
pub fn watershed(elevation: &[f32], mask: &[bool], w: usize, markers: &[usize]) -> Vec<u32> {
    let h = elevation.len() / w;
    let mut labels = vec![0u32; elevation.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for (k, &m) in markers.iter().enumerate() {
        if mask[m] && labels[m] == 0 {
            labels[m] = k as u32 + 1;
            heap.push(Item {
                elevation: elevation[m],
                seq,
                index: m,
                label: k as u32 + 1,
            });
            seq += 1;
        }
    }
    while let Some(item) = heap.pop() {
        let (x, y) = (item.index % w, item.index / w);
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let q = ny * w + nx;
                if mask[q] && labels[q] == 0 {
                    labels[q] = item.label;
                    heap.push(Item {
                        elevation: elevation[q].max(item.elevation),
                        seq,
                        index: q,
                        label: item.label,
                    });
                    seq += 1;
                }
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn otsu_bimodal() {
        let mut h = [0u64; 256];
        h[40] = 50;
        h[200] = 50;
        let t = otsu_threshold(&h);
        assert!((40..200).contains(&(t as usize)));
        assert_eq!(t, 40);
    }

    #[test]
    fn median_removes_spike() {
        let mut p = vec![0.0; 25];
        p[12] = 9.0;
        assert!(median3x3(&p, 5, 5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_step() {
        let p: Vec<f32> = (0..20).map(|i| if i % 5 >= 3 { 10.0 } else { 0.0 }).collect();
        let g = morphological_gradient(&p, 5, 4);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[2], 10.0);
        assert_eq!(g[3], 10.0);
    }

    #[test]
    fn holes_filled() {
        let mut m = vec![false; 49];
        for y in 1..6 {
            for x in 1..6 {
                m[y * 7 + x] = !(x == 3 && y == 3);
            }
        }
        let f = fill_holes(&m, 7, 7);
        assert!(f[3 * 7 + 3]);
        assert!(!f[0]);
    }

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (9, 7);
        let mask: Vec<bool> = (0..w * h).map(|i| (i * 37 % 11) > 2).collect();
        let dt = distance_transform(&mask, w, h);
        for y in 0..h {
            for x in 0..w {
                let mut best = f64::INFINITY;
                for by in -1..=h as i64 {
                    for bx in -1..=w as i64 {
                        let inside = bx >= 0 && by >= 0 && bx < w as i64 && by < h as i64;
                        if inside && mask[by as usize * w + bx as usize] {
                            continue;
                        }
                        let d = ((bx - x as i64).pow(2) + (by - y as i64).pow(2)) as f64;
                        best = best.min(d.sqrt());
                    }
                }
                let expect = if mask[y * w + x] { best } else { 0.0 };
                assert!((dt[y * w + x] as f64 - expect).abs() < 1e-5, "({x},{y})");
            }
        }
    }

    #[test]
    fn components_counted() {
        let m = [true, false, true, false, false, false, true, false, true];
        assert_eq!(label_components(&m, 3, 3).1, 4);
        let m = [true, false, false, false, true, false, false, false, true];
        assert_eq!(label_components(&m, 3, 3).1, 1);
    }
}
