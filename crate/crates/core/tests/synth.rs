use sdcs_core::annotation::CellClass;
use sdcs_core::classical::stain::stain_deconvolve;
use sdcs_core::synth::{generate_tile, split_dataset, ClassCounts, GroundTruth, SceneConfig};
use sdcs_core::Error;

fn counts(p: usize, n: usize, s: usize, l: usize) -> ClassCounts {
    ClassCounts {
        ki67_pos: p,
        ki67_neg: n,
        stroma: s,
        lymphocyte: l,
    }
}

fn min_pairwise(gt: &GroundTruth) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in gt.cells.iter().enumerate() {
        for b in &gt.cells[i + 1..] {
            best = best.min(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt());
        }
    }
    best
}

#[test]
fn requested_counts_and_spacing_are_honoured() {
    let cfg = SceneConfig {
        tile_size: 512,
        counts: counts(10, 10, 5, 5),
        min_spacing: 20.0,
        seed: 3,
        ..SceneConfig::default()
    };
    let (img, gt) = generate_tile(&cfg).unwrap();
    assert_eq!((img.width(), img.height()), (512, 512));
    assert_eq!(gt.cells.len(), 30);
    for class in CellClass::ALL {
        assert_eq!(gt.cells.iter().filter(|c| c.class == class).count(), cfg.counts.get(class));
    }
    assert!(min_pairwise(&gt) >= 20.0);
    assert!(gt.cells.iter().all(|c| c.x >= 0.0 && c.y >= 0.0 && c.x < 512.0 && c.y < 512.0));
    assert_eq!(gt.tissue_pixels, 512 * 512);
    let ann = gt.annotations("t", 512);
    assert_eq!(ann.class_counts(), [10, 10, 5, 5]);
    ann.validate().unwrap();
}

#[test]
fn same_seed_same_tile() {
    let cfg = SceneConfig { seed: 9, ..SceneConfig::default() };
    let a = generate_tile(&cfg).unwrap();
    let b = generate_tile(&cfg).unwrap();
    assert_eq!(a, b);
    let c = generate_tile(&SceneConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.0, c.0);
}

fn peak_in_disk(plane: &[f32], size: usize, cx: f64, cy: f64, r: f64) -> f32 {
    let mut best = 0.0f32;
    for y in 0..size {
        for x in 0..size {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                best = best.max(plane[y * size + x]);
            }
        }
    }
    best
}

#[test]
fn positive_dab_exceeds_negative_by_the_class_gap() {
    for seed in 0..5 {
        let cfg = SceneConfig {
            noise_sigma: 0.0,
            background_texture: 0.0,
            seed,
            ..SceneConfig::default()
        };
        let (img, gt) = generate_tile(&cfg).unwrap();
        let ch = stain_deconvolve(&img, &cfg.stains);
        let peak = |class: CellClass| -> Vec<f32> {
            gt.cells
                .iter()
                .filter(|c| c.class == class)
                .map(|c| peak_in_disk(&ch.dab, cfg.tile_size, c.x, c.y, 2.0))
                .collect()
        };
        let pos_min = peak(CellClass::Ki67Positive).into_iter().fold(f32::INFINITY, f32::min);
        let neg_max = peak(CellClass::Ki67Negative).into_iter().fold(0.0, f32::max);
        assert!((pos_min - neg_max) as f64 >= cfg.class_gap, "seed {seed}: {pos_min} vs {neg_max}");
    }
}

#[test]
fn weak_cells_stay_above_the_detectable_floor() {
    let cfg = SceneConfig {
        noise_sigma: 0.0,
        background_texture: 0.0,
        weak_stain_fraction: 1.0,
        seed: 4,
        ..SceneConfig::default()
    };
    let (img, gt) = generate_tile(&cfg).unwrap();
    let ch = stain_deconvolve(&img, &cfg.stains);
    assert!(gt.cells.iter().any(|c| c.weak));
    for c in &gt.cells {
        let h = peak_in_disk(&ch.hematoxylin, cfg.tile_size, c.x, c.y, c.radius);
        let d = peak_in_disk(&ch.dab, cfg.tile_size, c.x, c.y, c.radius);
        // 8-bit quantisation moves optical densities by well under 0.02
        assert!(h.max(d) as f64 >= cfg.detectable_floor - 0.02, "{c:?}: h {h} d {d}");
    }
}

#[test]
fn configs_that_break_the_floor_are_rejected() {
    let cfg = SceneConfig {
        negative_hematoxylin: (0.2, 0.3),
        weak_stain_factor: 0.5,
        ..SceneConfig::default()
    };
    assert!(cfg.validate().is_err());
    let cfg = SceneConfig {
        positive_dab: (0.1, 0.2),
        ..SceneConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn impossible_packing_is_infeasible() {
    let cfg = SceneConfig {
        tile_size: 64,
        counts: counts(30, 30, 0, 0),
        min_spacing: 20.0,
        ..SceneConfig::default()
    };
    assert!(matches!(generate_tile(&cfg), Err(Error::Infeasible(_))));
}

#[test]
fn coverslip_border_is_glass() {
    let cfg = SceneConfig {
        coverslip_border: 24,
        seed: 2,
        ..SceneConfig::default()
    };
    let (img, gt) = generate_tile(&cfg).unwrap();
    let inner = cfg.tile_size - 48;
    assert_eq!(gt.tissue_pixels, inner * inner);
    for x in 0..cfg.tile_size {
        let p = img.get(x, 3);
        assert!(p.iter().all(|&v| v >= 245), "{p:?}");
    }
    assert!(gt.cells.iter().all(|c| c.x > 24.0 && c.y > 24.0 && c.x < 232.0 && c.y < 232.0));
}

#[test]
fn split_sizes_follow_fractions() {
    let s = split_dataset(10, [0.6, 0.2, 0.2], 1).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6, 2, 2));
    let s = split_dataset(60, [40.0 / 60.0, 10.0 / 60.0, 10.0 / 60.0], 1).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (40, 10, 10));
    assert!(split_dataset(0, [0.6, 0.2, 0.2], 1).is_err());
    assert!(split_dataset(10, [0.6, 0.3, 0.2], 1).is_err());
}

#[test]
fn splits_partition_the_tiles() {
    for seed in 0..100 {
        let n = 1 + (seed as usize * 7) % 40;
        let s = split_dataset(n, [0.6, 0.2, 0.2], seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>(), "seed {seed}");
        assert_eq!(split_dataset(n, [0.6, 0.2, 0.2], seed).unwrap(), s);
    }
}
