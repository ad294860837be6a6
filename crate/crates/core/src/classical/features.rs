//! The 101-value handcrafted descriptor of a segmented nucleus.
//!
//! Layout: Haralick on gray (13), Haralick on hematoxylin (13), Zernike
//! magnitudes (49), shape (11), RGB intensity statistics (15).

use super::haralick::{self, haralick_features, quantize};
use super::intensity::{self, intensity_features};
use super::segment::SegmentedNucleus;
use super::shape::{self, nuclear_features};
use super::stain::StainChannels;
use super::zernike::{orders, zernike_features};
use crate::error::{Error, Result};
use std::path::Path;

pub const FEATURE_COUNT: usize = 101;
/// Margin added around the nucleus bounding box for texture windows.
pub const TEXTURE_MARGIN: usize = 2;
/// Hematoxylin optical density mapped onto the 32 texture levels.
pub const HEMATOXYLIN_RANGE: (f32, f32) = (0.0, 2.0);

/// Column names in descriptor order.
pub fn feature_names() -> Vec<String> {
    let mut out = Vec::with_capacity(FEATURE_COUNT);
    for ch in ["gray", "hema"] {
        out.extend(haralick::NAMES.iter().map(|n| format!("haralick_{ch}_{n}")));
    }
    out.extend(orders().iter().map(|(n, m)| format!("zernike_{n}_{m}")));
    out.extend(shape::NAMES.iter().map(|n| n.to_string()));
    for ch in ["r", "g", "b"] {
        out.extend(intensity::STATS.iter().map(|s| format!("intensity_{ch}_{s}")));
    }
    out
}

fn window(plane: &[f32], width: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
    for y in y0..=y1 {
        out.extend_from_slice(&plane[y * width + x0..=y * width + x1]);
    }
    out
}

/// Descriptor of one nucleus; every entry is finite.
pub fn extract_features(channels: &StainChannels, nucleus: &SegmentedNucleus) -> Result<Vec<f64>> {
    let (w, h) = (channels.width, channels.height);
    let (bx0, by0, bx1, by1) = nucleus.bbox;
    let x0 = bx0.saturating_sub(TEXTURE_MARGIN);
    let y0 = by0.saturating_sub(TEXTURE_MARGIN);
    let x1 = (bx1 + TEXTURE_MARGIN).min(w - 1);
    let y1 = (by1 + TEXTURE_MARGIN).min(h - 1);
    let (ww, wh) = (x1 - x0 + 1, y1 - y0 + 1);

    let mut out = Vec::with_capacity(FEATURE_COUNT);
    let gray = quantize(&window(&channels.gray, w, x0, y0, x1, y1), 0.0, 256.0);
    out.extend(haralick_features(&gray, ww, wh));
    let (lo, hi) = HEMATOXYLIN_RANGE;
    let hema = quantize(&window(&channels.hematoxylin, w, x0, y0, x1, y1), lo, hi);
    out.extend(haralick_features(&hema, ww, wh));
    let z = zernike_features(&nucleus.pixels)
        .ok_or_else(|| Error::DegenerateData("empty nucleus mask".into()))?;
    out.extend(z);
    let s = nuclear_features(&nucleus.pixels).ok_or_else(|| {
        Error::DegenerateData(format!("nucleus {} has {} pixels", nucleus.label, nucleus.area()))
    })?;
    out.extend(s);
    out.extend(intensity_features(&channels.rgb, &nucleus.pixels));
    debug_assert_eq!(out.len(), FEATURE_COUNT);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "extract_features" });
    }
    Ok(out)
}

/// Writes a feature matrix with the documented header plus optional
/// leading `x,y` and trailing `class_label` columns.
pub fn write_feature_csv(
    path: &Path,
    centers: &[(f64, f64)],
    rows: &[Vec<f64>],
    labels: Option<&[String]>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(feature_names());
    if labels.is_some() {
        header.push("class_label".into());
    }
    w.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec: Vec<String> = vec![centers[i].0.to_string(), centers[i].1.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        if let Some(l) = labels {
            rec.push(l[i].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_has_101_unique_names() {
        let names = feature_names();
        assert_eq!(names.len(), FEATURE_COUNT);
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), FEATURE_COUNT);
    }
}
