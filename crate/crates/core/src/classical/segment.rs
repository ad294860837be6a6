//! Classical nucleus segmentation: median filter, morphological gradient,
//! Otsu threshold, distance transform and marker-controlled watershed.

use super::morphology::{
    distance_transform, fill_holes, h_maxima, median3x3, morphological_gradient, otsu_threshold,
    watershed,
};
use super::stain::StainChannels;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    /// Minimum distance-transform peak height for a seed.
    pub min_peak: f32,
    /// Minimum dynamic separating two seeds in one component.
    pub peak_dynamic: f32,
    /// Weight of the normalised morphological gradient in the flooding
    /// relief (`-dt + weight * gradient / 255`).
    pub gradient_weight: f32,
    pub min_area: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            min_peak: 2.0,
            peak_dynamic: 1.0,
            gradient_weight: 1.0,
            min_area: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentedNucleus {
    pub label: u32,
    /// `(x, y)` pixels in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub centroid: (f64, f64),
    /// Inclusive `(x0, y0, x1, y1)`.
    pub bbox: (usize, usize, usize, usize),
}

impl SegmentedNucleus {
    pub fn from_pixels(label: u32, pixels: Vec<(usize, usize)>) -> Self {
        let n = pixels.len() as f64;
        let cx = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let cy = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let x0 = pixels.iter().map(|p| p.0).min().unwrap_or(0);
        let x1 = pixels.iter().map(|p| p.0).max().unwrap_or(0);
        let y0 = pixels.iter().map(|p| p.1).min().unwrap_or(0);
        let y1 = pixels.iter().map(|p| p.1).max().unwrap_or(0);
        SegmentedNucleus {
            label,
            pixels,
            centroid: (cx, cy),
            bbox: (x0, y0, x1, y1),
        }
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// Intermediate planes of the segmentation, exposed for inspection.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub threshold: u8,
    pub foreground: Vec<bool>,
    pub labels: Vec<u32>,
    pub nuclei: Vec<SegmentedNucleus>,
}

/// Segments dark objects of the gray plane.
pub fn segment(channels: &StainChannels, params: &SegmentParams) -> Segmentation {
    let (w, h) = (channels.width, channels.height);
    let darkness: Vec<f32> = channels.gray.iter().map(|&g| 255.0 - g).collect();
    let smooth = median3x3(&darkness, w, h);
    let grad = morphological_gradient(&smooth, w, h);
    let mut hist = [0u64; 256];
    for &v in &smooth {
        hist[v.round().clamp(0.0, 255.0) as usize] += 1;
    }
    let threshold = otsu_threshold(&hist);
    let blank = hist.iter().filter(|&&c| c > 0).count() < 2;
    let raw: Vec<bool> = smooth
        .iter()
        .map(|&v| !blank && v.round() > threshold as f32)
        .collect();
    let foreground = fill_holes(&raw, w, h);
    let dt = distance_transform(&foreground, w, h);
    // seeds: dominant peaks, then drop weak ones unless a component has none
    let peaks = h_maxima(&dt, &foreground, w, params.peak_dynamic);
    let mut markers: Vec<usize> = peaks.iter().copied().filter(|&p| dt[p] >= params.min_peak).collect();
    let (comp, n_comp) = super::morphology::label_components(&foreground, w, h);
    let mut seeded = vec![false; n_comp as usize + 1];
    for &m in &markers {
        seeded[comp[m] as usize] = true;
    }
    for &p in &peaks {
        if !seeded[comp[p] as usize] {
            seeded[comp[p] as usize] = true;
            markers.push(p);
        }
    }
    let elevation: Vec<f32> = dt
        .iter()
        .zip(&grad)
        .map(|(&d, &g)| -d + params.gradient_weight * g / 255.0)
        .collect();
    let labels = watershed(&elevation, &foreground, w, &markers);
    let mut pixels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); markers.len() + 1];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            pixels[l as usize].push((i % w, i / w));
        }
    }
    let nuclei = pixels
        .into_iter()
        .enumerate()
        .skip(1)
        .filter(|(_, p)| p.len() >= params.min_area)
        .map(|(l, p)| SegmentedNucleus::from_pixels(l as u32, p))
        .collect();
    Segmentation {
        threshold,
        foreground,
        labels,
        nuclei,
    }
}

pub fn segment_nuclei(channels: &StainChannels, params: &SegmentParams) -> Vec<SegmentedNucleus> {
    segment(channels, params).nuclei
}
