//! Deterministic generator of Ki67-like tiles with exact ground truth.
//!
//! Cells are painted as stain amounts along the H-DAB optical-density
//! vectors on a lightly counterstained, textured background, then converted
//! to 8-bit RGB. Positive nuclei carry DAB with a radial falloff, negative
//! nuclei are hematoxylin ellipses (optionally hollow), lymphocytes are small
//! dark disks and stromal cells are thin spindles.

use crate::annotation::{AnnotatedCell, AnnotationSet, CellClass};
use crate::classical::stain::{rgb_from_od, StainMatrix};
use crate::error::{Error, Result};
use crate::raster::RasterImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCounts {
    pub ki67_pos: usize,
    pub ki67_neg: usize,
    pub stroma: usize,
    pub lymphocyte: usize,
}

impl ClassCounts {
    pub fn get(&self, class: CellClass) -> usize {
        match class {
            CellClass::Ki67Positive => self.ki67_pos,
            CellClass::Ki67Negative => self.ki67_neg,
            CellClass::Stroma => self.stroma,
            CellClass::Lymphocyte => self.lymphocyte,
        }
    }

    pub fn total(&self) -> usize {
        self.ki67_pos + self.ki67_neg + self.stroma + self.lymphocyte
    }
}

/// Scene parameters. Radii and spacing are in pixels; stain amounts are
/// optical densities along the unit stain vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub tile_size: usize,
    pub counts: ClassCounts,
    pub nucleus_radius: (f64, f64),
    pub lymphocyte_radius: (f64, f64),
    /// Semi-major axis of stromal spindles.
    pub stroma_length: (f64, f64),
    pub stroma_axis_ratio: (f64, f64),
    pub positive_dab: (f64, f64),
    pub positive_counterstain: f64,
    pub negative_hematoxylin: (f64, f64),
    pub lymphocyte_hematoxylin: (f64, f64),
    pub stroma_hematoxylin: (f64, f64),
    pub weak_stain_fraction: f64,
    /// Multiplier applied to the stain of weak cells.
    pub weak_stain_factor: f64,
    /// Fraction of negative nuclei rendered as annuli.
    pub hollow_fraction: f64,
    pub background_hematoxylin: f64,
    pub background_texture: f64,
    /// Per-pixel Gaussian noise in 8-bit intensity units.
    pub noise_sigma: f64,
    pub min_spacing: f64,
    /// Width of a glass (coverslip) border; 0 disables it.
    pub coverslip_border: usize,
    /// Minimum peak DAB excess of positive over negative nuclei.
    pub class_gap: f64,
    /// Lowest peak stain any rendered cell may have.
    pub detectable_floor: f64,
    pub stains: StainMatrix,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            tile_size: 256,
            counts: ClassCounts {
                ki67_pos: 16,
                ki67_neg: 16,
                stroma: 8,
                lymphocyte: 8,
            },
            nucleus_radius: (5.0, 7.0),
            lymphocyte_radius: (3.0, 4.0),
            stroma_length: (9.0, 11.0),
            stroma_axis_ratio: (3.0, 3.6),
            positive_dab: (0.55, 0.85),
            positive_counterstain: 0.12,
            negative_hematoxylin: (0.35, 0.55),
            lymphocyte_hematoxylin: (0.85, 1.05),
            stroma_hematoxylin: (0.25, 0.38),
            weak_stain_fraction: 0.2,
            weak_stain_factor: 0.6,
            hollow_fraction: 0.25,
            background_hematoxylin: 0.10,
            background_texture: 0.03,
            noise_sigma: 2.0,
            min_spacing: 18.0,
            coverslip_border: 0,
            class_gap: 0.2,
            detectable_floor: 0.15,
            stains: StainMatrix::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("scene", m));
        for (name, (lo, hi)) in [
            ("nucleus_radius", self.nucleus_radius),
            ("lymphocyte_radius", self.lymphocyte_radius),
            ("stroma_length", self.stroma_length),
            ("stroma_axis_ratio", self.stroma_axis_ratio),
            ("positive_dab", self.positive_dab),
            ("negative_hematoxylin", self.negative_hematoxylin),
            ("lymphocyte_hematoxylin", self.lymphocyte_hematoxylin),
            ("stroma_hematoxylin", self.stroma_hematoxylin),
        ] {
            if !(lo > 0.0 && hi >= lo) {
                return bad(format!("{name} range ({lo}, {hi}) must be positive and ordered"));
            }
        }
        for (name, f) in [
            ("weak_stain_fraction", self.weak_stain_fraction),
            ("hollow_fraction", self.hollow_fraction),
            ("weak_stain_factor", self.weak_stain_factor),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} = {f} outside [0, 1]"));
            }
        }
        if self.stroma_axis_ratio.0 < 3.0 {
            return bad("stromal spindles need an axis ratio of at least 3".into());
        }
        if self.lymphocyte_radius.1 > 4.0 {
            return bad("lymphocyte radius must not exceed 4 px".into());
        }
        let weak = if self.weak_stain_fraction > 0.0 { self.weak_stain_factor } else { 1.0 };
        if self.positive_dab.0 * weak < self.class_gap {
            return bad("weakest positive DAB falls below the class gap".into());
        }
        let floor = [
            self.negative_hematoxylin.0 * weak,
            self.stroma_hematoxylin.0,
            self.lymphocyte_hematoxylin.0,
            self.positive_dab.0 * weak,
        ];
        if floor.iter().any(|&v| v < self.detectable_floor) {
            return bad("a weak cell would render below the detectable floor".into());
        }
        if self.tile_size < 2 * self.coverslip_border + 16 {
            return bad("tile too small for its coverslip border".into());
        }
        if self.min_spacing < 0.0 {
            return bad("negative spacing".into());
        }
        Ok(())
    }
}

/// One rendered cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub x: f64,
    pub y: f64,
    pub class: CellClass,
    pub radius: f64,
    pub weak: bool,
    pub hollow: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cells: Vec<CellRecord>,
    /// Pixels inside the tissue region (everything but the coverslip border).
    pub tissue_pixels: usize,
}

impl GroundTruth {
    pub fn annotations(&self, image_id: &str, size: usize) -> AnnotationSet {
        AnnotationSet {
            image_id: image_id.to_string(),
            width: size,
            height: size,
            magnification: "synthetic".into(),
            cells: self
                .cells
                .iter()
                .map(|c| AnnotatedCell {
                    x: c.x,
                    y: c.y,
                    class: c.class,
                })
                .collect(),
        }
    }
}

struct Shape2 {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Shape2 {
    /// Normalised elliptical radius of `(x, y)`; 1 on the boundary.
    fn q(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt()
    }

    /// Anti-aliased coverage over a one pixel wide rim.
    fn coverage(&self, q: f64) -> f64 {
        (0.5 + (1.0 - q) * self.b).clamp(0.0, 1.0)
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Smooth value noise in `[-1, 1]` on a coarse lattice.
fn value_noise(rng: &mut ChaCha8Rng, size: usize, cell: usize) -> Vec<f64> {
    let g = size / cell + 2;
    let lattice: Vec<f64> = (0..g * g).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        let fy = y as f64 / cell as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..size {
            let fx = x as f64 / cell as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let l = |i: usize, j: usize| lattice[i * g + j];
            let top = l(y0, x0) * (1.0 - tx) + l(y0, x0 + 1) * tx;
            let bot = l(y0 + 1, x0) * (1.0 - tx) + l(y0 + 1, x0 + 1) * tx;
            out[y * size + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

const MAX_ATTEMPTS: usize = 5000;

/// Renders one tile and its ground truth.
pub fn generate_tile(config: &SceneConfig) -> Result<(RasterImage, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = config.tile_size;
    let border = config.coverslip_border;

    // placement
    let mut classes: Vec<CellClass> = CellClass::ALL
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, config.counts.get(c)))
        .collect();
    classes.shuffle(&mut rng);
    let margin = border as f64 + 6.0;
    let (lo, hi) = (margin, size as f64 - margin);
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(classes.len());
    for _ in &classes {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let (x, y) = (rng.random_range(lo..hi), rng.random_range(lo..hi));
            let ok = centers.iter().all(|&(px, py)| {
                ((px - x).powi(2) + (py - y).powi(2)).sqrt() >= config.min_spacing
            });
            if ok {
                centers.push((x, y));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Infeasible(format!(
                "could only place {} of {} cells at spacing {} on a {size}px tile",
                centers.len(),
                classes.len(),
                config.min_spacing
            )));
        }
    }

    // background stain field
    let noise = value_noise(&mut rng, size, 16);
    let mut hem: Vec<f64> = noise
        .iter()
        .map(|n| config.background_hematoxylin + config.background_texture * n)
        .collect();
    let mut dab = vec![0.0f64; size * size];

    let mut cells = Vec::with_capacity(classes.len());
    for (&class, &(cx, cy)) in classes.iter().zip(&centers) {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let cancer = matches!(class, CellClass::Ki67Positive | CellClass::Ki67Negative);
        let weak = cancer && rng.random_bool(config.weak_stain_fraction);
        let hollow = class == CellClass::Ki67Negative && rng.random_bool(config.hollow_fraction);
        let factor = if weak { config.weak_stain_factor } else { 1.0 };
        let (a, b, radius) = match class {
            CellClass::Ki67Positive | CellClass::Ki67Negative => {
                let r = uniform(&mut rng, config.nucleus_radius);
                let e = rng.random_range(1.0..1.2);
                (r * e, r / e, r)
            }
            CellClass::Lymphocyte => {
                let r = uniform(&mut rng, config.lymphocyte_radius);
                (r, r, r)
            }
            CellClass::Stroma => {
                let a = uniform(&mut rng, config.stroma_length);
                let ratio = uniform(&mut rng, config.stroma_axis_ratio);
                (a, a / ratio, a)
            }
        };
        let (h0, d0) = match class {
            CellClass::Ki67Positive => (
                config.positive_counterstain,
                uniform(&mut rng, config.positive_dab) * factor,
            ),
            CellClass::Ki67Negative => (uniform(&mut rng, config.negative_hematoxylin) * factor, 0.0),
            CellClass::Lymphocyte => (uniform(&mut rng, config.lymphocyte_hematoxylin), 0.0),
            CellClass::Stroma => (uniform(&mut rng, config.stroma_hematoxylin), 0.0),
        };
        let shape = Shape2 {
            cx,
            cy,
            a,
            b,
            cos: theta.cos(),
            sin: theta.sin(),
        };
        let reach = a.ceil() as i64 + 2;
        for y in (cy as i64 - reach).max(0)..=(cy as i64 + reach).min(size as i64 - 1) {
            for x in (cx as i64 - reach).max(0)..=(cx as i64 + reach).min(size as i64 - 1) {
                let q = shape.q(x as f64, y as f64);
                let alpha = shape.coverage(q);
                if alpha <= 0.0 {
                    continue;
                }
                let qq = q.min(1.0);
                let (mut h, d) = match class {
                    CellClass::Ki67Positive => (h0, d0 * (1.0 - 0.25 * qq * qq)),
                    _ => (h0 * (1.0 - 0.15 * qq * qq), 0.0),
                };
                if hollow && q < 0.55 {
                    h *= 0.35;
                }
                let i = y as usize * size + x as usize;
                // cells replace the background stain under their footprint
                hem[i] = hem[i] * (1.0 - alpha) + h.max(hem[i]) * alpha;
                dab[i] = dab[i] * (1.0 - alpha) + d * alpha;
            }
        }
        cells.push(CellRecord {
            x: cx,
            y: cy,
            class,
            radius,
            weak,
            hollow,
        });
    }

    let normal = Normal::new(0.0, config.noise_sigma.max(1e-12)).expect("finite sigma");
    let mut img = RasterImage::new(size, size);
    let mut tissue_pixels = 0;
    for y in 0..size {
        for x in 0..size {
            let in_border = x < border || y < border || x >= size - border || y >= size - border;
            let i = y * size + x;
            let base = if in_border {
                [250.0, 250.0, 250.0]
            } else {
                tissue_pixels += 1;
                rgb_from_od(config.stains.mix(hem[i], dab[i])).map(f64::from)
            };
            let sigma = if in_border { 0.5 } else { 1.0 };
            let px = base.map(|v| {
                let n = if config.noise_sigma > 0.0 { normal.sample(&mut rng) * sigma } else { 0.0 };
                (v + n).round().clamp(0.0, 255.0) as u8
            });
            img.put(x, y, px);
        }
    }
    Ok((
        img,
        GroundTruth {
            cells,
            tissue_pixels,
        },
    ))
}

/// Train / validation / test tile indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded partition of `n` tiles. Validation and test sizes are rounded
/// from their fractions; training takes the remainder.
pub fn split_dataset(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split> {
    if n == 0 {
        return Err(Error::invalid("split_dataset", "no tiles to split"));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(
            "split_dataset",
            format!("fractions {fractions:?} must be in [0,1] and sum to 1"),
        ));
    }
    let n_val = (fractions[1] * n as f64).round() as usize;
    let n_test = ((fractions[2] * n as f64).round() as usize).min(n - n_val.min(n));
    let n_val = n_val.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n - n_val - n_test;
    let mut train = idx[..n_train].to_vec();
    let mut validation = idx[n_train..n_train + n_val].to_vec();
    let mut test = idx[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene_is_background_only() {
        let cfg = SceneConfig {
            counts: ClassCounts {
                ki67_pos: 0,
                ki67_neg: 0,
                stroma: 0,
                lymphocyte: 0,
            },
            ..SceneConfig::default()
        };
        let (img, gt) = generate_tile(&cfg).unwrap();
        assert!(gt.cells.is_empty());
        assert_eq!(img.width(), cfg.tile_size);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SceneConfig {
            seed: 42,
            ..SceneConfig::default()
        };
        let a = generate_tile(&cfg).unwrap();
        let b = generate_tile(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_tile(&SceneConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn counts_and_spacing() {
        let cfg = SceneConfig {
            tile_size: 512,
            counts: ClassCounts {
                ki67_pos: 10,
                ki67_neg: 10,
                stroma: 5,
                lymphocyte: 5,
            },
            min_spacing: 20.0,
            seed: 3,
            ..SceneConfig::default()
        };
        let (_, gt) = generate_tile(&cfg).unwrap();
        assert_eq!(gt.cells.len(), 30);
        for (i, a) in gt.cells.iter().enumerate() {
            for b in &gt.cells[i + 1..] {
                assert!(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() >= 20.0);
            }
        }
        for class in CellClass::ALL {
            let n = gt.cells.iter().filter(|c| c.class == class).count();
            assert_eq!(n, cfg.counts.get(class));
        }
    }

    #[test]
    fn infeasible_packing_errors() {
        let cfg = SceneConfig {
            tile_size: 64,
            min_spacing: 40.0,
            ..SceneConfig::default()
        };
        assert!(matches!(generate_tile(&cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn invalid_fraction_rejected() {
        let cfg = SceneConfig {
            hollow_fraction: 1.5,
            ..SceneConfig::default()
        };
        assert!(generate_tile(&cfg).is_err());
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(10, [0.6, 0.2, 0.2], 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6, 2, 2));
        let s = split_dataset(7, [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(s.train, (0..7).collect::<Vec<_>>());
        assert!(split_dataset(0, [1.0, 0.0, 0.0], 1).is_err());
        assert!(split_dataset(5, [0.5, 0.2, 0.2], 1).is_err());
    }
}
