use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcs_core::annotation::{AnnotatedCell, CellClass};
use sdcs_core::net::{
    build_training_mask, sample_sparse, sample_training_patches, train_sdcs, BlockSpec, SdcsConfig, SdcsModel,
};
use sdcs_core::par::Execution;
use sdcs_core::raster::RasterImage;
use sdcs_core::synth::{generate_tile, SceneConfig};

fn noise_patch(seed: u64, size: usize) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..size * size * 3).map(|_| rng.random()).collect();
    RasterImage::from_raw(size, size, data).unwrap()
}

#[test]
fn default_hypercolumn_has_704_channels() {
    let cfg = SdcsConfig::default();
    assert_eq!(cfg.total_channels(), 64 + 128 + 512);
    assert_eq!(cfg.total_channels(), 704);
    let compact = SdcsConfig::compact();
    assert_eq!(compact.total_channels(), 16 + 32 + 48);
    assert_eq!(compact.deepest_only().total_channels(), 48);
}

#[test]
fn stack_width_matches_selected_blocks_for_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let blocks: Vec<BlockSpec> = (0..5)
            .map(|_| BlockSpec {
                width: rng.random_range(1..6),
                convs: 1,
            })
            .collect();
        let mut chosen: Vec<usize> = (1..=5).filter(|_| rng.random_bool(0.5)).collect();
        if chosen.is_empty() {
            chosen.push(5);
        }
        let cfg = SdcsConfig {
            blocks: blocks.clone(),
            hypercolumn_blocks: chosen.clone(),
            head_widths: [4, 4],
            ..SdcsConfig::default()
        };
        let expect: usize = chosen.iter().map(|&b| blocks[b - 1].width).sum();
        assert_eq!(cfg.total_channels(), expect);
        let model = SdcsModel::new(cfg, 3).unwrap();
        let stack = model.forward_hypercolumns(&noise_patch(2, 64)).unwrap();
        assert_eq!(stack.total_channels(), expect);
        assert_eq!(stack.size(), (64, 64));
    }
}

#[test]
fn dense_and_sparse_heads_agree_bitwise() {
    let model = SdcsModel::new(SdcsConfig::default(), 7).unwrap();
    let patch = noise_patch(8, 64);
    let dense = model.predict_mask(&patch).unwrap();
    let stack = model.forward_hypercolumns(&patch).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let points: Vec<(usize, usize)> = (0..100).map(|_| (rng.random_range(0..64), rng.random_range(0..64))).collect();
    let samples = sample_sparse(&stack, &points).unwrap();
    let sparse = model.head_forward(&samples).unwrap();
    for (i, &(x, y)) in points.iter().enumerate() {
        for c in 0..3 {
            assert_eq!(
                dense.prob(c, x, y).to_bits(),
                sparse[i][c].to_bits(),
                "pixel ({x},{y}) class {c}"
            );
        }
        assert_eq!(samples.descriptor(i), stack.fiber(x, y));
    }
}

#[test]
fn probabilities_form_distributions() {
    let model = SdcsModel::new(SdcsConfig::compact(), 1).unwrap();
    let map = model.predict_mask(&noise_patch(4, 64)).unwrap();
    for y in (0..64).step_by(7) {
        for x in (0..64).step_by(5) {
            let s: f32 = (0..3).map(|c| map.prob(c, x, y)).sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn wrong_patch_size_is_rejected() {
    let model = SdcsModel::new(SdcsConfig::compact(), 1).unwrap();
    assert!(model.predict_mask(&noise_patch(1, 48)).is_err());
    let stack = model.forward_hypercolumns(&noise_patch(1, 64)).unwrap();
    assert!(sample_sparse(&stack, &[(64, 0)]).is_err());
}

#[test]
fn training_mask_is_balanced_and_labelled_by_class() {
    let cfg = SdcsConfig::default();
    let cells = vec![
        AnnotatedCell { x: 20.0, y: 20.0, class: CellClass::Ki67Positive },
        AnnotatedCell { x: 40.0, y: 40.0, class: CellClass::Stroma },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = build_training_mask(&cells, 64, &cfg, &mut rng);
    assert_eq!(m.len(), cfg.sparse_samples_per_patch);
    // two radius-3 disks of 29 pixels each
    assert_eq!(m.foreground(), 58);
    for (&(x, y), &l) in m.points.iter().zip(&m.labels) {
        let d1 = (x as f64 - 20.0).hypot(y as f64 - 20.0);
        let d2 = (x as f64 - 40.0).hypot(y as f64 - 40.0);
        match l {
            1 => assert!(d1 <= 3.0),
            2 => assert!(d2 <= 3.0),
            _ => assert!(d1 > 3.0 && d2 > 3.0),
        }
    }
    let total: f32 = m.weights.iter().sum();
    assert!((total - 1.0).abs() < 1e-5);
    for class in 0..3 {
        let w: f32 = m.weights.iter().zip(&m.labels).filter(|(_, &l)| l == class).map(|(w, _)| w).sum();
        assert!((w - 1.0 / 3.0).abs() < 1e-5, "class {class} weight {w}");
    }
}

#[test]
fn weights_roundtrip_through_file() {
    let cfg = SdcsConfig::compact();
    let model = SdcsModel::new(cfg.clone(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sdcs.bin");
    model.save(&path).unwrap();
    let back = SdcsModel::load(cfg.clone(), &path).unwrap();
    assert_eq!(back, model);
    assert!(SdcsModel::load(SdcsConfig::default(), &path).is_err());
}

fn small_training_set(cfg: &SdcsConfig) -> Vec<sdcs_core::net::TrainingPatch> {
    let scene = SceneConfig {
        tile_size: 96,
        counts: sdcs_core::synth::ClassCounts {
            ki67_pos: 3,
            ki67_neg: 3,
            stroma: 1,
            lymphocyte: 1,
        },
        seed: 4,
        ..SceneConfig::default()
    };
    let (img, gt) = generate_tile(&scene).unwrap();
    let cells = gt.annotations("t", 96).cells;
    sample_training_patches(&[(&img, &cells)], cfg).unwrap()
}

#[test]
fn training_is_deterministic_across_execution_modes() {
    let mut cfg = SdcsConfig::compact();
    cfg.training.epochs = 2;
    cfg.training.patches_per_tile = 4;
    cfg.training.batch_size = 2;
    let data = small_training_set(&cfg);
    let (a, ca) = train_sdcs(SdcsModel::new(cfg.clone(), 1).unwrap(), &data, Execution::Sequential).unwrap();
    let (b, cb) = train_sdcs(SdcsModel::new(cfg.clone(), 1).unwrap(), &data, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    assert_eq!(ca.len(), 2);
}

#[test]
fn training_reduces_loss_on_a_fixed_set() {
    let mut cfg = SdcsConfig::compact();
    cfg.training.epochs = 6;
    cfg.training.patches_per_tile = 4;
    cfg.training.batch_size = 2;
    let data = small_training_set(&cfg);
    let (_, curve) = train_sdcs(SdcsModel::new(cfg, 2).unwrap(), &data, Execution::Parallel).unwrap();
    assert!(curve.last().unwrap().loss < curve[0].loss, "{curve:?}");
}
