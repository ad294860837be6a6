//! End-to-end synthetic benchmark: data generation, training, detection,
//! classification and scoring for the network pipeline and the handcrafted
//! baseline.

use crate::annotation::{AnnotatedCell, AnnotationSet, CellClass};
use crate::center::{train_center_classifier, CenterClassifier, CenterConfig, CenterSample};
use crate::classical::features::extract_features;
use crate::classical::segment::{segment_nuclei, SegmentParams, SegmentedNucleus};
use crate::classical::stain::{stain_deconvolve, StainChannels};
use crate::classical::svm::{train_classifier, GridScore, SvmGrid, SvmModel};
use crate::detector::{
    aggregate_windows, best_threshold, calibrate, find_local_maxima, retain_in_mask, write_detections_csv,
    Detection, ProbabilityMap, ThresholdScore, WindowPredictor,
};
use crate::error::{Error, Result};
use crate::eval::{ki67_index_of, match_detections, pooled_metrics, MetricsReport, TileMatch};
use crate::net::{sample_training_patches, train_sdcs, EpochStats, SdcsConfig, SdcsModel};
use crate::par::{self, Execution};
use crate::raster::RasterImage;
use crate::synth::{generate_tile, split_dataset, SceneConfig};
use crate::tiling::{tissue_mask, TissueMaskParams};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// SplitMix64 finaliser, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub stride: usize,
    /// Suppression distance used with a fixed threshold.
    pub min_distance: f64,
    /// Suppression distances tried during calibration, smallest first.
    pub min_distances: Vec<f64>,
    pub match_radius: f64,
    /// Candidate thresholds swept on the validation tiles.
    pub thresholds: Vec<f32>,
    /// Fixed threshold; skips calibration when set.
    pub threshold: Option<f32>,
    pub tissue: TissueMaskParams,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            stride: 48,
            min_distance: 6.0,
            min_distances: vec![6.0, 8.0, 10.0],
            match_radius: 6.0,
            thresholds: (6..=19).map(|i| i as f32 * 0.05).collect(),
            threshold: None,
            tissue: TissueMaskParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    pub segment: SegmentParams,
    pub grid: SvmGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub train_tiles: usize,
    pub validation_tiles: usize,
    pub test_tiles: usize,
    pub sdcs: SdcsConfig,
    pub center: CenterConfig,
    pub detector: DetectorConfig,
    pub classical: ClassicalConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let mut sdcs = SdcsConfig::compact();
        sdcs.training.epochs = 10;
        BenchmarkConfig {
            seed: 0,
            scene: SceneConfig::default(),
            train_tiles: 40,
            validation_tiles: 10,
            test_tiles: 10,
            sdcs,
            center: CenterConfig::default(),
            detector: DetectorConfig::default(),
            classical: ClassicalConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.sdcs.validate()?;
        self.center.validate()?;
        if self.train_tiles == 0 || self.test_tiles == 0 {
            return Err(Error::invalid("benchmark", "need training and test tiles"));
        }
        let d = &self.detector;
        if d.threshold.is_none() && (d.thresholds.is_empty() || d.min_distances.is_empty() || self.validation_tiles == 0) {
            return Err(Error::invalid(
                "benchmark",
                "calibration needs candidate thresholds and validation tiles, or a fixed threshold",
            ));
        }
        if d.stride == 0 || d.min_distance < 0.0 || d.min_distances.iter().any(|&m| m < 0.0) || d.match_radius <= 0.0 {
            return Err(Error::invalid("benchmark", "invalid detector geometry"));
        }
        Ok(())
    }
}

/// A tile with its annotated cell centers.
#[derive(Clone, Debug)]
pub struct LabelledTile {
    pub id: String,
    pub image: RasterImage,
    pub cells: Vec<AnnotatedCell>,
}

impl LabelledTile {
    pub fn from_annotations(image: RasterImage, set: AnnotationSet) -> Result<Self> {
        if (set.width, set.height) != (image.width(), image.height()) {
            return Err(Error::shape(
                "annotations",
                format!(
                    "{} annotates {}x{} but the image is {}x{}",
                    set.image_id,
                    set.width,
                    set.height,
                    image.width(),
                    image.height()
                ),
            ));
        }
        set.validate()?;
        Ok(LabelledTile {
            id: set.image_id,
            image,
            cells: set.cells,
        })
    }

    pub fn annotation_set(&self, magnification: &str) -> AnnotationSet {
        AnnotationSet {
            image_id: self.id.clone(),
            width: self.image.width(),
            height: self.image.height(),
            magnification: magnification.to_string(),
            cells: self.cells.clone(),
        }
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        self.cells.iter().map(|c| (c.x, c.y)).collect()
    }

    pub fn classes(&self) -> Vec<CellClass> {
        self.cells.iter().map(|c| c.class).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Datasets {
    pub train: Vec<LabelledTile>,
    pub validation: Vec<LabelledTile>,
    pub test: Vec<LabelledTile>,
}

/// Generates every tile from its own derived seed and partitions them with
/// a seeded split.
pub fn generate_datasets(config: &BenchmarkConfig, exec: Execution) -> Result<Datasets> {
    let (a, b, c) = (config.train_tiles, config.validation_tiles, config.test_tiles);
    let n = a + b + c;
    let fr = [a as f64 / n as f64, b as f64 / n as f64, c as f64 / n as f64];
    let split = split_dataset(n, fr, derive_seed(config.seed, 1))?;
    let tiles = par::try_map_range(exec, n, |i| {
        let scene = SceneConfig {
            seed: derive_seed(config.seed, 1000 + i as u64),
            ..config.scene.clone()
        };
        let (image, truth) = generate_tile(&scene)?;
        let size = image.width();
        LabelledTile::from_annotations(image, truth.annotations(&format!("tile_{i:04}"), size))
    })?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| tiles[i].clone()).collect::<Vec<_>>();
    Ok(Datasets {
        train: pick(&split.train),
        validation: pick(&split.validation),
        test: pick(&split.test),
    })
}

/// Probability maps of several tiles; tiles are processed one after the
/// other with the windows of each tile spread over the pool.
pub fn probability_maps<P: WindowPredictor + ?Sized>(
    predictor: &P,
    tiles: &[&RasterImage],
    stride: usize,
    exec: Execution,
) -> Result<Vec<ProbabilityMap>> {
    tiles.iter().map(|t| aggregate_windows(t, predictor, stride, exec)).collect()
}

/// Share of Ki67-positive among nucleus probability at a pixel of a
/// three-class (background, positive, other) map; 0.5 when both vanish.
pub fn ki67_share(map: &ProbabilityMap, x: usize, y: usize) -> f32 {
    if map.classes() < 3 {
        return 0.5;
    }
    let (p, o) = (map.get(1, x, y), map.get(2, x, y));
    if p + o > 0.0 {
        p / (p + o)
    } else {
        0.5
    }
}

fn pixel_of(x: f64, y: f64, w: usize, h: usize) -> (usize, usize) {
    (
        (x.round().max(0.0) as usize).min(w - 1),
        (y.round().max(0.0) as usize).min(h - 1),
    )
}

/// Local maxima of the foreground map that fall on tissue.
pub fn detect_on_map(map: &ProbabilityMap, mask: &[bool], threshold: f32, min_distance: f64) -> Vec<Detection> {
    let fg = map.foreground();
    let dets = find_local_maxima(&fg, map.width(), map.height(), threshold, min_distance);
    retain_in_mask(dets, mask, map.width())
}

/// Assigns a class to every detection with the center classifier.
pub fn classify_detections(
    classifier: &CenterClassifier,
    tile: &RasterImage,
    map: &ProbabilityMap,
    detections: &mut [Detection],
    exec: Execution,
) -> Result<()> {
    let preds = par::try_map(exec, detections, |d| {
        classifier.classify_center(tile, (d.x, d.y), ki67_share(map, d.x, d.y))
    })?;
    for (d, p) in detections.iter_mut().zip(preds) {
        d.class = Some(p.class);
    }
    Ok(())
}

/// Center-classifier training examples at the true centers of each tile.
pub fn center_samples(tiles: &[LabelledTile], maps: &[ProbabilityMap]) -> Vec<CenterSample> {
    let mut out = Vec::new();
    for (t, m) in tiles.iter().zip(maps) {
        let (w, h) = (t.image.width(), t.image.height());
        for c in &t.cells {
            let (x, y) = pixel_of(c.x, c.y, w, h);
            out.push(CenterSample::new(&t.image, (x, y), ki67_share(m, x, y), c.class));
        }
    }
    out
}

/// Per-tile Ki67 scoring of a test tile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileScore {
    pub id: String,
    pub detections: usize,
    pub truths: usize,
    pub ki67_truth: Option<f64>,
    pub ki67_predicted: Option<f64>,
    pub ki67_abs_error: Option<f64>,
}

/// Everything a variant produces that is a deterministic function of the
/// configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub threshold: Option<f32>,
    pub min_distance: Option<f64>,
    pub calibration: Vec<ThresholdScore>,
    pub grid: Vec<GridScore>,
    pub sdcs_curve: Vec<EpochStats>,
    pub center_curve: Vec<EpochStats>,
    pub metrics: MetricsReport,
    pub tiles: Vec<TileScore>,
}

impl VariantReport {
    /// Largest per-tile Ki67 index error; `None` if any tile could not be
    /// scored.
    pub fn max_ki67_error(&self) -> Option<f64> {
        self.tiles
            .iter()
            .map(|t| t.ki67_abs_error)
            .try_fold(0.0f64, |m, e| e.map(|e| m.max(e)))
    }
}

#[derive(Clone, Debug)]
pub struct VariantRun {
    pub report: VariantReport,
    /// Classified detections per test tile, in test-set order.
    pub detections: Vec<(String, Vec<Detection>)>,
    /// Stage name and wall seconds.
    pub timings: Vec<(String, f64)>,
}

impl VariantRun {
    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.1).sum()
    }

    /// Writes `metrics.json`, `metrics.txt`, `report.json` and one
    /// detections CSV per test tile. Timings go to `timings.json` since
    /// they vary between otherwise identical runs.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let det_dir = dir.join("detections");
        std::fs::create_dir_all(&det_dir).map_err(|e| Error::io(&det_dir, e))?;
        for (id, dets) in &self.detections {
            write_detections_csv(&det_dir.join(format!("{id}.csv")), dets)?;
        }
        write_json(&dir.join("metrics.json"), &self.report.metrics)?;
        write_json(&dir.join("report.json"), &self.report)?;
        let txt = dir.join("metrics.txt");
        std::fs::write(&txt, self.report.metrics.to_text()).map_err(|e| Error::io(&txt, e))?;
        write_json(&dir.join("timings.json"), &self.timings)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Pooled metrics and per-tile Ki67 scores of classified detections.
pub fn score_tiles(tiles: &[LabelledTile], detections: &[Vec<Detection>], radius: f64) -> Result<(MetricsReport, Vec<TileScore>)> {
    let mut matches = Vec::with_capacity(tiles.len());
    let mut scores = Vec::with_capacity(tiles.len());
    for (t, dets) in tiles.iter().zip(detections) {
        let pts: Vec<(f64, f64)> = dets.iter().map(|d| (d.x as f64, d.y as f64)).collect();
        let det_classes: Vec<CellClass> = dets
            .iter()
            .map(|d| d.class.ok_or_else(|| Error::invalid("score_tiles", "unclassified detection")))
            .collect::<Result<_>>()?;
        let truth_classes = t.classes();
        let ki67_truth = ki67_index_of(&truth_classes).ok();
        let ki67_predicted = ki67_index_of(&det_classes).ok();
        scores.push(TileScore {
            id: t.id.clone(),
            detections: dets.len(),
            truths: truth_classes.len(),
            ki67_truth,
            ki67_predicted,
            ki67_abs_error: ki67_truth.zip(ki67_predicted).map(|(a, b)| (a - b).abs()),
        });
        matches.push(TileMatch {
            matching: match_detections(&pts, &t.centers(), radius),
            detection_classes: det_classes,
            truth_classes,
        });
    }
    Ok((pooled_metrics(&matches)?, scores))
}

fn masks(tiles: &[LabelledTile], params: &TissueMaskParams) -> Vec<Vec<bool>> {
    tiles.iter().map(|t| tissue_mask(&t.image, params).0).collect()
}

fn images(tiles: &[LabelledTile]) -> Vec<&RasterImage> {
    tiles.iter().map(|t| &t.image).collect()
}

struct Stopwatch {
    start: Instant,
    laps: Vec<(String, f64)>,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            start: Instant::now(),
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.laps.push((name.to_string(), (now - self.start).as_secs_f64()));
        self.start = now;
        log::info!("{name}: {:.1} s", self.laps.last().map_or(0.0, |l| l.1));
    }
}

/// Trains an SDCS model from the training tiles.
pub fn train_sdcs_on(
    tiles: &[LabelledTile],
    config: &SdcsConfig,
    seed: u64,
    exec: Execution,
) -> Result<(SdcsModel, Vec<EpochStats>)> {
    let mut config = config.clone();
    config.training.seed = derive_seed(seed, 2);
    let pairs: Vec<(&RasterImage, &[AnnotatedCell])> =
        tiles.iter().map(|t| (&t.image, t.cells.as_slice())).collect();
    let patches = sample_training_patches(&pairs, &config)?;
    let model = SdcsModel::new(config, derive_seed(seed, 3))?;
    train_sdcs(model, &patches, exec)
}

/// Center classifier trained on the true centers of the training tiles,
/// with the auxiliary channel read from the detection network's maps.
pub fn train_center_on(
    model: &SdcsModel,
    tiles: &[LabelledTile],
    config: &BenchmarkConfig,
    exec: Execution,
) -> Result<(CenterClassifier, Vec<EpochStats>)> {
    let maps = probability_maps(model, &images(tiles), config.detector.stride, exec)?;
    let samples = center_samples(tiles, &maps);
    drop(maps);
    let center_config = CenterConfig {
        seed: derive_seed(config.seed, 4),
        ..config.center.clone()
    };
    train_center_classifier(&samples, &center_config, exec)
}

/// Chosen operating point of the detector and the full sweep behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f32,
    pub min_distance: f64,
    pub sweep: Vec<ThresholdScore>,
}

/// Sweeps thresholds and suppression distances on labelled tiles and keeps
/// the best detection F1.
pub fn calibrate_detector(
    model: &SdcsModel,
    tiles: &[LabelledTile],
    det: &DetectorConfig,
    exec: Execution,
) -> Result<Calibration> {
    if tiles.is_empty() || det.thresholds.is_empty() || det.min_distances.is_empty() {
        return Err(Error::invalid("calibrate", "need tiles, thresholds and suppression distances"));
    }
    let maps = probability_maps(model, &images(tiles), det.stride, exec)?;
    let tile_masks = masks(tiles, &det.tissue);
    let inputs: Vec<(Vec<f32>, usize, usize, Vec<(f64, f64)>)> = maps
        .iter()
        .zip(&tile_masks)
        .zip(tiles)
        .map(|((m, mask), t)| {
            let fg = m
                .foreground()
                .into_iter()
                .zip(mask)
                .map(|(v, &keep)| if keep { v } else { 0.0 })
                .collect();
            (fg, m.width(), m.height(), t.centers())
        })
        .collect();
    let sweep: Vec<ThresholdScore> = det
        .min_distances
        .iter()
        .flat_map(|&md| calibrate(&inputs, &det.thresholds, md, det.match_radius))
        .collect();
    let best = best_threshold(&sweep).expect("non-empty sweep");
    Ok(Calibration {
        threshold: best.threshold,
        min_distance: best.min_distance,
        sweep,
    })
}

/// Detections on tissue, classified when a center classifier is given.
pub fn detect_tile(
    model: &SdcsModel,
    classifier: Option<&CenterClassifier>,
    image: &RasterImage,
    det: &DetectorConfig,
    threshold: f32,
    min_distance: f64,
    exec: Execution,
) -> Result<Vec<Detection>> {
    let map = aggregate_windows(image, model, det.stride, exec)?;
    let (mask, _) = tissue_mask(image, &det.tissue);
    let mut dets = detect_on_map(&map, &mask, threshold, min_distance);
    if let Some(c) = classifier {
        classify_detections(c, image, &map, &mut dets, exec)?;
    }
    Ok(dets)
}

/// Detection network plus center classifier, with the detection threshold
/// calibrated on the validation tiles.
pub fn run_sdcs_variant(
    name: &str,
    config: &BenchmarkConfig,
    sdcs: &SdcsConfig,
    data: &Datasets,
    exec: Execution,
) -> Result<VariantRun> {
    let mut sw = Stopwatch::new();
    let det = &config.detector;
    let (model, sdcs_curve) = train_sdcs_on(&data.train, sdcs, config.seed, exec)?;
    sw.lap("train_sdcs");
    let (classifier, center_curve) = train_center_on(&model, &data.train, config, exec)?;
    sw.lap("train_center");

    let (threshold, min_distance, calibration) = match det.threshold {
        Some(t) => (t, det.min_distance, Vec::new()),
        None => {
            let c = calibrate_detector(&model, &data.validation, det, exec)?;
            (c.threshold, c.min_distance, c.sweep)
        }
    };
    sw.lap("calibrate");

    let detections = data
        .test
        .iter()
        .map(|t| detect_tile(&model, Some(&classifier), &t.image, det, threshold, min_distance, exec))
        .collect::<Result<Vec<_>>>()?;
    sw.lap("detect_classify");

    let (metrics, tiles) = score_tiles(&data.test, &detections, det.match_radius)?;
    Ok(VariantRun {
        report: VariantReport {
            name: name.to_string(),
            threshold: Some(threshold),
            min_distance: Some(min_distance),
            calibration,
            grid: Vec::new(),
            sdcs_curve,
            center_curve,
            metrics,
            tiles,
        },
        detections: data.test.iter().map(|t| t.id.clone()).zip(detections).collect(),
        timings: sw.laps,
    })
}

/// Segmented nuclei of a tile with their feature rows; nuclei whose
/// descriptor is degenerate are skipped.
pub fn nucleus_features(
    channels: &StainChannels,
    params: &SegmentParams,
    exec: Execution,
) -> Result<Vec<(SegmentedNucleus, Vec<f64>)>> {
    let nuclei = segment_nuclei(channels, params);
    let rows = par::map(exec, &nuclei, |n| extract_features(channels, n));
    let mut out = Vec::with_capacity(nuclei.len());
    for (n, r) in nuclei.into_iter().zip(rows) {
        match r {
            Ok(r) => out.push((n, r)),
            Err(Error::DegenerateData(m)) => log::debug!("skipping nucleus: {m}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Feature rows of segments matched to a true nucleus, labelled with its
/// class. Unmatched segments have no label and are left out.
pub fn labelled_features(
    tiles: &[LabelledTile],
    config: &BenchmarkConfig,
    exec: Execution,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for t in tiles {
        let ch = stain_deconvolve(&t.image, &config.scene.stains);
        let feats = nucleus_features(&ch, &config.classical.segment, exec)?;
        let pts: Vec<(f64, f64)> = feats.iter().map(|(n, _)| n.centroid).collect();
        let m = match_detections(&pts, &t.centers(), config.detector.match_radius);
        let classes = t.classes();
        let mut feats: Vec<Option<Vec<f64>>> = feats.into_iter().map(|(_, r)| Some(r)).collect();
        for &(d, g) in &m.pairs {
            rows.push(feats[d].take().expect("each detection matched once"));
            labels.push(classes[g].index());
        }
    }
    Ok((rows, labels))
}

/// Classifies every segmented nucleus of a tile.
pub fn classify_segments(
    model: &SvmModel,
    tile: &RasterImage,
    config: &BenchmarkConfig,
    mask: &[bool],
    exec: Execution,
) -> Result<Vec<Detection>> {
    let ch = stain_deconvolve(tile, &config.scene.stains);
    let feats = nucleus_features(&ch, &config.classical.segment, exec)?;
    let dets: Vec<Detection> = feats
        .iter()
        .map(|(n, row)| {
            let (x, y) = pixel_of(n.centroid.0, n.centroid.1, tile.width(), tile.height());
            Detection {
                x,
                y,
                score: 1.0,
                class: CellClass::from_index(model.predict_one(row)),
            }
        })
        .collect();
    Ok(retain_in_mask(dets, mask, tile.width()))
}

/// Watershed segmentation, 101 handcrafted features and a grid-searched
/// RBF SVM.
pub fn run_handcrafted(config: &BenchmarkConfig, data: &Datasets, exec: Execution) -> Result<VariantRun> {
    let mut sw = Stopwatch::new();
    let (train_x, train_y) = labelled_features(&data.train, config, exec)?;
    let (val_x, val_y) = labelled_features(&data.validation, config, exec)?;
    sw.lap("features");
    let (model, grid) = train_classifier(&train_x, &train_y, &val_x, &val_y, &config.classical.grid, exec)?;
    sw.lap("train_svm");
    let test_masks = masks(&data.test, &config.detector.tissue);
    let mut detections = Vec::with_capacity(data.test.len());
    for (t, mask) in data.test.iter().zip(&test_masks) {
        detections.push(classify_segments(&model, &t.image, config, mask, exec)?);
    }
    sw.lap("detect_classify");
    let (metrics, tiles) = score_tiles(&data.test, &detections, config.detector.match_radius)?;
    Ok(VariantRun {
        report: VariantReport {
            name: "handcrafted".to_string(),
            threshold: None,
            min_distance: None,
            calibration: Vec::new(),
            grid,
            sdcs_curve: Vec::new(),
            center_curve: Vec::new(),
            metrics,
            tiles,
        },
        detections: data.test.iter().map(|t| t.id.clone()).zip(detections).collect(),
        timings: sw.laps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Hypercolumns from every configured block.
    Integrated,
    /// Only the deepest block feeds the head.
    Conv5,
    Handcrafted,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Integrated => "integrated",
            Variant::Conv5 => "conv5",
            Variant::Handcrafted => "handcrafted",
        }
    }
}

/// Generates the datasets once and runs the requested variants on them.
pub fn run_benchmark(config: &BenchmarkConfig, variants: &[Variant], exec: Execution) -> Result<Vec<VariantRun>> {
    config.validate()?;
    let start = Instant::now();
    let data = generate_datasets(config, exec)?;
    let gen_secs = start.elapsed().as_secs_f64();
    let mut out = Vec::with_capacity(variants.len());
    for &v in variants {
        let mut run = match v {
            Variant::Integrated => run_sdcs_variant(v.name(), config, &config.sdcs, &data, exec)?,
            Variant::Conv5 => run_sdcs_variant(v.name(), config, &config.sdcs.deepest_only(), &data, exec)?,
            Variant::Handcrafted => run_handcrafted(config, &data, exec)?,
        };
        run.timings.insert(0, ("generate".to_string(), gen_secs));
        out.push(run);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 1), derive_seed(0, 2));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn datasets_have_requested_sizes() {
        let config = BenchmarkConfig {
            train_tiles: 3,
            validation_tiles: 1,
            test_tiles: 2,
            scene: SceneConfig {
                tile_size: 96,
                counts: crate::synth::ClassCounts {
                    ki67_pos: 2,
                    ki67_neg: 2,
                    stroma: 1,
                    lymphocyte: 1,
                },
                ..SceneConfig::default()
            },
            ..BenchmarkConfig::default()
        };
        let d = generate_datasets(&config, Execution::Sequential).unwrap();
        assert_eq!((d.train.len(), d.validation.len(), d.test.len()), (3, 1, 2));
        let mut ids: Vec<&str> = d.train.iter().chain(&d.validation).chain(&d.test).map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 6);
    }
}
