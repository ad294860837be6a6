//! Sliding-window probability maps and thresholded local-maximum detection.

use crate::annotation::CellClass;
use crate::error::{Error, Result};
use crate::eval::match_detections;
use crate::net::SdcsModel;
use crate::par::{self, Execution};
use crate::raster::RasterImage;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Anything that maps a square window to per-class probability planes.
pub trait WindowPredictor: Sync {
    fn window(&self) -> usize;
    fn classes(&self) -> usize;
    /// `classes * window * window` values, class-major.
    fn predict(&self, patch: &RasterImage) -> Result<Vec<f32>>;
}

impl WindowPredictor for SdcsModel {
    fn window(&self) -> usize {
        self.config().patch_size
    }

    fn classes(&self) -> usize {
        self.config().num_classes
    }

    fn predict(&self, patch: &RasterImage) -> Result<Vec<f32>> {
        Ok(self.predict_mask(patch)?.probs.into_data())
    }
}

/// Tile-wide class probabilities averaged over overlapping windows.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    classes: usize,
    values: Vec<f32>,
    counts: Vec<u32>,
}

impl ProbabilityMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn plane(&self, class: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.values[class * n..(class + 1) * n]
    }

    pub fn get(&self, class: usize, x: usize, y: usize) -> f32 {
        self.plane(class)[y * self.width + x]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Probability of not being background (class 0).
    pub fn foreground(&self) -> Vec<f32> {
        self.plane(0).iter().map(|&b| (1.0 - b).clamp(0.0, 1.0)).collect()
    }
}

/// Window origins along one axis: multiples of `stride`, with the last
/// window aligned to the far edge.
pub fn window_origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut o = 0;
    while o + window < len {
        out.push(o);
        o += stride;
    }
    out.push(len - window);
    out
}

/// Mean of all window predictions covering each pixel.
///
/// Windows may be evaluated in parallel. Sums are accumulated in `f64`,
/// where adding a handful of `f32` probabilities is exact, so the map does
/// not depend on the order windows are merged in.
pub fn aggregate_windows<P: WindowPredictor + ?Sized>(
    tile: &RasterImage,
    predictor: &P,
    stride: usize,
    exec: Execution,
) -> Result<ProbabilityMap> {
    let win = predictor.window();
    let (w, h) = (tile.width(), tile.height());
    if w < win || h < win {
        return Err(Error::invalid(
            "aggregate_windows",
            format!("tile {w}x{h} smaller than window {win}"),
        ));
    }
    if stride == 0 || stride > win {
        return Err(Error::invalid(
            "aggregate_windows",
            format!("stride {stride} must be in 1..={win}"),
        ));
    }
    let origins: Vec<(usize, usize)> = window_origins(h, win, stride)
        .into_iter()
        .flat_map(|y| window_origins(w, win, stride).into_iter().map(move |x| (x, y)))
        .collect();
    let k = predictor.classes();
    let preds = par::try_map(exec, &origins, |&(x0, y0)| {
        let out = predictor.predict(&tile.crop(x0, y0, win, win)?)?;
        if out.len() != k * win * win {
            return Err(Error::shape(
                "aggregate_windows",
                format!("predictor returned {} values", out.len()),
            ));
        }
        Ok(out)
    })?;
    let n = w * h;
    let mut sums = vec![0.0f64; k * n];
    let mut counts = vec![0u32; n];
    for (&(x0, y0), pred) in origins.iter().zip(&preds) {
        for y in 0..win {
            for x in 0..win {
                let i = (y0 + y) * w + x0 + x;
                counts[i] += 1;
                for c in 0..k {
                    sums[c * n + i] += pred[(c * win + y) * win + x] as f64;
                }
            }
        }
    }
    let values = sums
        .iter()
        .enumerate()
        .map(|(j, &s)| (s / counts[j % n] as f64) as f32)
        .collect();
    Ok(ProbabilityMap {
        width: w,
        height: h,
        classes: k,
        values,
        counts,
    })
}

/// A detected nucleus center in tile coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub score: f32,
    pub class: Option<CellClass>,
}

/// Thresholded local maxima with greedy suppression.
///
/// Candidates are pixels at or above `threshold` that are not exceeded by
/// any 8-neighbour. They are visited by descending score, ties in `(y, x)`
/// order, and kept when no kept point lies closer than `min_distance`.
pub fn find_local_maxima(
    map: &[f32],
    width: usize,
    height: usize,
    threshold: f32,
    min_distance: f64,
) -> Vec<Detection> {
    let mut cands = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let v = map[y * width + x];
            if !(v >= threshold) {
                continue;
            }
            let mut peak = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    if map[ny as usize * width + nx as usize] > v {
                        peak = false;
                        break 'nb;
                    }
                }
            }
            if peak {
                cands.push((v, y, x));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let min2 = min_distance * min_distance;
    let mut kept: Vec<Detection> = Vec::new();
    for (v, y, x) in cands {
        let clear = kept.iter().all(|d| {
            let (dx, dy) = (d.x as f64 - x as f64, d.y as f64 - y as f64);
            dx * dx + dy * dy >= min2
        });
        if clear {
            kept.push(Detection {
                x,
                y,
                score: v,
                class: None,
            });
        }
    }
    kept
}

/// Drops detections whose pixel is outside the tissue mask.
pub fn retain_in_mask(detections: Vec<Detection>, mask: &[bool], width: usize) -> Vec<Detection> {
    detections
        .into_iter()
        .filter(|d| mask[d.y * width + d.x])
        .collect()
}

/// Detection F1 of one threshold over a validation set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScore {
    pub threshold: f32,
    pub min_distance: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Sweeps thresholds over foreground maps paired with true centers and
/// reports pooled detection scores for each.
pub fn calibrate(
    maps: &[(Vec<f32>, usize, usize, Vec<(f64, f64)>)],
    thresholds: &[f32],
    min_distance: f64,
    radius: f64,
) -> Vec<ThresholdScore> {
    thresholds
        .iter()
        .map(|&threshold| {
            let (mut tp, mut nd, mut nt) = (0usize, 0usize, 0usize);
            for (map, w, h, truths) in maps {
                let dets: Vec<(f64, f64)> = find_local_maxima(map, *w, *h, threshold, min_distance)
                    .iter()
                    .map(|d| (d.x as f64, d.y as f64))
                    .collect();
                let m = match_detections(&dets, truths, radius);
                tp += m.pairs.len();
                nd += dets.len();
                nt += truths.len();
            }
            let precision = if nd == 0 { 0.0 } else { tp as f64 / nd as f64 };
            let recall = if nt == 0 { 0.0 } else { tp as f64 / nt as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ThresholdScore {
                threshold,
                min_distance,
                precision,
                recall,
                f1,
            }
        })
        .collect()
}

/// Highest-F1 entry; ties keep the earliest entry.
pub fn best_threshold(scores: &[ThresholdScore]) -> Option<ThresholdScore> {
    scores.iter().copied().fold(None, |best, s| match best {
        Some(b) if b.f1 >= s.f1 => Some(b),
        _ => Some(s),
    })
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    x: usize,
    y: usize,
    score: f32,
    class_label: String,
}

pub fn write_detections_csv(path: &Path, detections: &[Detection]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for d in detections {
        w.serialize(CsvRow {
            x: d.x,
            y: d.y,
            score: d.score,
            class_label: d.class.map(|c| c.label().to_string()).unwrap_or_default(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    if detections.is_empty() {
        // csv writes no header when no record was serialized
        std::fs::write(path, "x,y,score,class_label\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_detections_csv(path: &Path) -> Result<Vec<Detection>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: CsvRow = row?;
        let class = if row.class_label.is_empty() {
            None
        } else {
            Some(CellClass::parse(&row.class_label).ok_or_else(|| {
                Error::Format(format!("{}: unknown class label {:?}", path.display(), row.class_label))
            })?)
        };
        out.push(Detection {
            x: row.x,
            y: row.y,
            score: row.score,
            class,
        });
    }
    Ok(out)
}

/// Sidecar written next to a detections CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionManifest {
    pub image_id: String,
    pub tile_origin: (usize, usize),
    pub tile_size: (usize, usize),
    pub threshold: f32,
    pub min_distance: f64,
    pub count: usize,
}
