use super::SdcsConfig;
use crate::annotation::AnnotatedCell;
use rand::seq::index;
use rand::Rng;

/// Labeled pixels of one training patch with class-balanced loss weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMask {
    pub points: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
    /// Each present class receives the same total weight; weights sum to 1.
    pub weights: Vec<f32>,
}

impl SparseMask {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn foreground(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

/// Labels pixels within `label_disk_radius` of each centroid with the
/// centroid's segmentation class and completes the set with random
/// background pixels up to `sparse_samples_per_patch`.
///
/// Cells are given in patch coordinates; disks reaching past the patch edge
/// are clipped. Disks are centred on the rounded centroid. Where disks
/// overlap the nearer centroid wins, ties going to the lower index. If the
/// foreground exceeds half the budget a random half-budget subset is kept.
pub fn build_training_mask<R: Rng + ?Sized>(
    cells: &[AnnotatedCell],
    size: usize,
    config: &SdcsConfig,
    rng: &mut R,
) -> SparseMask {
    let r = config.label_disk_radius as i64;
    let total = config.sparse_samples_per_patch.min(size * size);
    // (squared distance to centroid, cell index)
    let mut owner: Vec<Option<(f64, usize)>> = vec![None; size * size];
    for (i, cell) in cells.iter().enumerate() {
        let (cx, cy) = (cell.x.round() as i64, cell.y.round() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x >= size as i64 || y >= size as i64 {
                    continue;
                }
                let d2 = (x as f64 - cell.x).powi(2) + (y as f64 - cell.y).powi(2);
                let slot = &mut owner[y as usize * size + x as usize];
                match slot {
                    Some((best, _)) if *best <= d2 => {}
                    _ => *slot = Some((d2, i)),
                }
            }
        }
    }
    let mut fg: Vec<usize> = (0..size * size).filter(|&i| owner[i].is_some()).collect();
    let cap = total / 2;
    if fg.len() > cap {
        let mut keep: Vec<usize> = index::sample(rng, fg.len(), cap).into_vec();
        keep.sort_unstable();
        fg = keep.into_iter().map(|k| fg[k]).collect();
    }
    let bg_pool: Vec<usize> = (0..size * size).filter(|&i| owner[i].is_none()).collect();
    let n_bg = (total - fg.len()).min(bg_pool.len());
    let mut bg: Vec<usize> = index::sample(rng, bg_pool.len(), n_bg)
        .into_iter()
        .map(|k| bg_pool[k])
        .collect();
    bg.sort_unstable();

    let mut points = Vec::with_capacity(fg.len() + bg.len());
    let mut labels = Vec::with_capacity(fg.len() + bg.len());
    for &i in &fg {
        let cell = owner[i].expect("foreground pixel").1;
        points.push((i % size, i / size));
        labels.push(cells[cell].class.segmentation_class());
    }
    for &i in &bg {
        points.push((i % size, i / size));
        labels.push(0);
    }
    let mut counts = vec![0usize; config.num_classes.max(3)];
    for &l in &labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    let weights = labels
        .iter()
        .map(|&l| 1.0 / (counts[l] * present) as f32)
        .collect();
    SparseMask {
        points,
        labels,
        weights,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::CellClass;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(x: f64, y: f64, class: CellClass) -> AnnotatedCell {
        AnnotatedCell { x, y, class }
    }

    #[test]
    fn empty_annotations_give_background_only() {
        let cfg = SdcsConfig::default();
        let m = build_training_mask(&[], 64, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m.len(), 512);
        assert!(m.labels.iter().all(|&l| l == 0));
        let s: f32 = m.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-4);
    }

    #[test]
    fn radius_zero_single_pixel() {
        let cfg = SdcsConfig {
            label_disk_radius: 0,
            ..SdcsConfig::default()
        };
        let cells = [cell(10.2, 20.7, CellClass::Ki67Positive), cell(40.0, 40.0, CellClass::Stroma)];
        let m = build_training_mask(&cells, 64, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m.foreground(), 2);
        assert_eq!(m.points[0], (10, 21));
        assert_eq!(m.labels[..2], [1, 2]);
    }

    #[test]
    fn class_weights_balance() {
        let cfg = SdcsConfig::default();
        let cells = [cell(10.0, 10.0, CellClass::Ki67Positive), cell(40.0, 40.0, CellClass::Lymphocyte)];
        let m = build_training_mask(&cells, 64, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        for class in 0..3 {
            let w: f32 = m
                .labels
                .iter()
                .zip(&m.weights)
                .filter(|(&l, _)| l == class)
                .map(|(_, &w)| w)
                .sum();
            assert!((w - 1.0 / 3.0).abs() < 1e-4);
        }
    }
}
