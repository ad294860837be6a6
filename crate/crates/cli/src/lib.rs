//! Command line front end: each subcommand reads its inputs, runs one stage
//! of the pipeline and writes its artifacts plus a provenance record into
//! the output directory.

pub mod args;
pub mod io;

use anyhow::{bail, Context, Result};
use args::{Cli, Command, Hypercolumns, VariantArg};
use io::{config_hash, detection_files, image_paths, load_config, load_image, load_split, read_detections, stem, write_json, Outputs, Provenance};
use sdcs_core::annotation::{AnnotationSet, CellClass};
use sdcs_core::center::CenterClassifier;
use sdcs_core::classical::svm::{train_classifier, SvmModel};
use sdcs_core::detector::{aggregate_windows, write_detections_csv, Detection};
use sdcs_core::eval::{ki67_index_of, match_detections, pooled_metrics, TileMatch};
use sdcs_core::net::{SdcsConfig, SdcsModel};
use sdcs_core::par::Execution;
use sdcs_core::pipeline::{
    calibrate_detector, classify_detections, classify_segments, detect_tile, generate_datasets, labelled_features,
    run_benchmark, train_center_on, train_sdcs_on, BenchmarkConfig, Calibration, Variant,
};
use sdcs_core::raster::RasterImage;
use sdcs_core::tiling::{tile_image, tile_origins, tissue_mask, TileManifest};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Threshold used by `detect` when neither a flag, a calibration file nor
/// the configuration fixes one.
pub const DEFAULT_THRESHOLD: f32 = 0.5;

pub const CLASS_COLORS: [(CellClass, [u8; 3]); 4] = [
    (CellClass::Ki67Positive, [220, 30, 30]),
    (CellClass::Ki67Negative, [30, 190, 40]),
    (CellClass::Lymphocyte, [40, 80, 230]),
    (CellClass::Stroma, [240, 210, 20]),
];
const UNCLASSIFIED_COLOR: [u8; 3] = [255, 255, 255];

struct RunContext {
    config: BenchmarkConfig,
    exec: Execution,
    tile_size: usize,
    threshold: Option<f32>,
    inputs: Vec<String>,
}

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let mut config = load_config(g.config.as_deref())?;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(t) = g.threshold {
        if !(0.0..=1.0).contains(&t) {
            bail!("threshold {t} outside [0, 1]");
        }
        config.detector.threshold = Some(t);
    }
    config.validate().context("invalid configuration")?;
    if g.tile_size == 0 {
        bail!("tile size must be positive");
    }
    let name = cli.command.name();
    let mut out = Outputs::new(&g.out, g.force);
    let provenance_path = out.check(format!("{name}.provenance.json"))?;
    let mut ctx = RunContext {
        config,
        exec: if g.sequential { Execution::Sequential } else { Execution::Parallel },
        tile_size: g.tile_size,
        threshold: g.threshold,
        inputs: Vec::new(),
    };
    log::info!("{name}: writing to {}", g.out.display());
    match &cli.command {
        Command::Synth => synth(&ctx, &mut out)?,
        Command::TrainSdcs { data, hypercolumns } => train_sdcs_cmd(&mut ctx, &mut out, data, *hypercolumns)?,
        Command::TrainCenter { data, sdcs, hypercolumns } => train_center_cmd(&mut ctx, &mut out, data, sdcs, *hypercolumns)?,
        Command::Calibrate { data, sdcs, hypercolumns } => calibrate_cmd(&mut ctx, &mut out, data, sdcs, *hypercolumns)?,
        Command::Detect {
            input,
            sdcs,
            calibration,
            hypercolumns,
        } => detect_cmd(&mut ctx, &mut out, input, sdcs, calibration.as_deref(), *hypercolumns)?,
        Command::Classify {
            input,
            detections,
            sdcs,
            center,
            hypercolumns,
        } => classify_cmd(&mut ctx, &mut out, input, detections, sdcs, center, *hypercolumns)?,
        Command::TrainSvm { data } => train_svm_cmd(&mut ctx, &mut out, data)?,
        Command::PredictSvm { input, svm } => predict_svm_cmd(&mut ctx, &mut out, input, svm)?,
        Command::Evaluate { detections, truth } => evaluate_cmd(&mut ctx, &mut out, detections, truth)?,
        Command::Score { detections } => score_cmd(&mut ctx, &mut out, detections)?,
        Command::Overlay { input, detections } => overlay_cmd(&mut ctx, &mut out, input, detections)?,
        Command::Tile { input } => tile_cmd(&mut ctx, &mut out, input)?,
        Command::Benchmark { variants } => benchmark_cmd(&ctx, &mut out, variants)?,
    }
    let record = Provenance {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_hash(&ctx.config)?,
        seed: ctx.config.seed,
        threshold: ctx.threshold,
        tile_size: ctx.tile_size,
        inputs: ctx.inputs.clone(),
        outputs: out.written().iter().map(|p| p.display().to_string()).collect(),
        config: &ctx.config,
    };
    std::fs::create_dir_all(out.root()).with_context(|| format!("creating {}", out.root().display()))?;
    write_json(&provenance_path, &record)
}

fn note_input(ctx: &mut RunContext, path: &Path) {
    ctx.inputs.push(path.display().to_string());
}

fn sdcs_config(config: &BenchmarkConfig, h: Hypercolumns) -> SdcsConfig {
    match h {
        Hypercolumns::All => config.sdcs.clone(),
        Hypercolumns::Deepest => config.sdcs.deepest_only(),
    }
}

fn load_sdcs(ctx: &mut RunContext, path: &Path, h: Hypercolumns) -> Result<SdcsModel> {
    note_input(ctx, path);
    SdcsModel::load(sdcs_config(&ctx.config, h), path).with_context(|| {
        format!(
            "loading detection network {}; it must have been trained with the same network configuration",
            path.display()
        )
    })
}

fn load_center(ctx: &mut RunContext, path: &Path) -> Result<CenterClassifier> {
    note_input(ctx, path);
    CenterClassifier::load(ctx.config.center.clone(), path)
        .with_context(|| format!("loading center classifier {}", path.display()))
}

fn split_dir(ctx: &mut RunContext, data: &Path, split: &str) -> Result<PathBuf> {
    let dir = data.join(split);
    if !dir.is_dir() {
        bail!("{} is missing; run `sdcs synth` or point --data at a dataset root", dir.display());
    }
    note_input(ctx, &dir);
    Ok(dir)
}

fn synth(ctx: &RunContext, out: &mut Outputs) -> Result<()> {
    let data = generate_datasets(&ctx.config, ctx.exec)?;
    for (split, tiles) in [("train", &data.train), ("validation", &data.validation), ("test", &data.test)] {
        for t in tiles {
            let img = out.claim(format!("{split}/{}.png", t.id))?;
            let ann = out.claim(format!("{split}/{}.json", t.id))?;
            t.image.save(&img)?;
            t.annotation_set("synthetic").save(&ann)?;
        }
        log::info!("{split}: {} tiles", tiles.len());
    }
    Ok(())
}

fn train_sdcs_cmd(ctx: &mut RunContext, out: &mut Outputs, data: &Path, h: Hypercolumns) -> Result<()> {
    let model_path = out.check("sdcs.bin")?;
    let curve_path = out.check("sdcs_curve.json")?;
    let tiles = load_split(&split_dir(ctx, data, "train")?)?;
    let (model, curve) = train_sdcs_on(&tiles, &sdcs_config(&ctx.config, h), ctx.config.seed, ctx.exec)?;
    out.claim("sdcs.bin")?;
    out.claim("sdcs_curve.json")?;
    model.save(&model_path)?;
    write_json(&curve_path, &curve)
}

fn train_center_cmd(ctx: &mut RunContext, out: &mut Outputs, data: &Path, sdcs: &Path, h: Hypercolumns) -> Result<()> {
    let model_path = out.check("center.bin")?;
    let curve_path = out.check("center_curve.json")?;
    let model = load_sdcs(ctx, sdcs, h)?;
    let tiles = load_split(&split_dir(ctx, data, "train")?)?;
    let (classifier, curve) = train_center_on(&model, &tiles, &ctx.config, ctx.exec)?;
    out.claim("center.bin")?;
    out.claim("center_curve.json")?;
    classifier.save(&model_path)?;
    write_json(&curve_path, &curve)
}

fn calibrate_cmd(ctx: &mut RunContext, out: &mut Outputs, data: &Path, sdcs: &Path, h: Hypercolumns) -> Result<()> {
    let path = out.check("calibration.json")?;
    let model = load_sdcs(ctx, sdcs, h)?;
    let tiles = load_split(&split_dir(ctx, data, "validation")?)?;
    let cal = calibrate_detector(&model, &tiles, &ctx.config.detector, ctx.exec)?;
    for s in &cal.sweep {
        println!(
            "min_distance {:>4.1}  threshold {:.2}  precision {:.4}  recall {:.4}  f1 {:.4}",
            s.min_distance, s.threshold, s.precision, s.recall, s.f1
        );
    }
    println!("best: threshold {:.2} min_distance {:.1}", cal.threshold, cal.min_distance);
    out.claim("calibration.json")?;
    write_json(&path, &cal)
}

/// A tile of a larger image plus the region of the image it answers for.
/// Clamped edge tiles overlap their neighbours; each pixel is owned by
/// exactly one tile.
struct TilePlan {
    manifest: TileManifest,
    image: RasterImage,
    owned: (usize, usize, usize, usize),
}

fn owned_span(origins: &[usize], k: usize, tile: usize, len: usize) -> (usize, usize) {
    let start = if k == 0 { 0 } else { origins[k - 1] + tile };
    let end = if k + 1 < origins.len() { origins[k] + tile } else { len };
    (start, end)
}

fn plan_tiles(image: &RasterImage, id: &str, tile_size: usize) -> Result<Vec<TilePlan>> {
    let xs = tile_origins(image.width(), tile_size);
    let ys = tile_origins(image.height(), tile_size);
    let (w, h) = (image.width(), image.height());
    Ok(tile_image(image, id, tile_size)?
        .into_iter()
        .map(|(manifest, tile)| {
            let kx = xs.iter().position(|&x| x == manifest.origin.0).expect("origin on grid");
            let ky = ys.iter().position(|&y| y == manifest.origin.1).expect("origin on grid");
            let (x0, x1) = owned_span(&xs, kx, tile_size, w);
            let (y0, y1) = owned_span(&ys, ky, tile_size, h);
            TilePlan {
                manifest,
                image: tile,
                owned: (x0, x1, y0, y1),
            }
        })
        .collect())
}

impl TilePlan {
    fn owns(&self, x: usize, y: usize) -> bool {
        let (x0, x1, y0, y1) = self.owned;
        (x0..x1).contains(&x) && (y0..y1).contains(&y)
    }

    /// Tile-local detections kept when the tile owns them, in image
    /// coordinates.
    fn to_global(&self, dets: Vec<Detection>) -> Vec<Detection> {
        let (ox, oy) = self.manifest.origin;
        dets.into_iter()
            .map(|d| Detection {
                x: d.x + ox,
                y: d.y + oy,
                ..d
            })
            .filter(|d| self.owns(d.x, d.y))
            .collect()
    }
}

fn detect_cmd(
    ctx: &mut RunContext,
    out: &mut Outputs,
    input: &Path,
    sdcs: &Path,
    calibration: Option<&Path>,
    h: Hypercolumns,
) -> Result<()> {
    let paths = image_paths(input)?;
    let targets: Vec<PathBuf> = paths
        .iter()
        .map(|p| Ok(out.check(format!("detections/{}.csv", stem(p)?))?))
        .collect::<Result<_>>()?;
    let model = load_sdcs(ctx, sdcs, h)?;
    let cal: Option<Calibration> = match calibration {
        Some(p) => {
            note_input(ctx, p);
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let det = ctx.config.detector.clone();
    let threshold = ctx
        .threshold
        .or(cal.as_ref().map(|c| c.threshold))
        .or(det.threshold)
        .unwrap_or(DEFAULT_THRESHOLD);
    let min_distance = cal.as_ref().map_or(det.min_distance, |c| c.min_distance);
    log::info!("threshold {threshold}, min distance {min_distance}");
    ctx.threshold = Some(threshold);
    for (path, target) in paths.iter().zip(&targets) {
        note_input(ctx, path);
        let image = load_image(path)?;
        let mut dets = Vec::new();
        for plan in plan_tiles(&image, &stem(path)?, ctx.tile_size)? {
            let local = detect_tile(&model, None, &plan.image, &det, threshold, min_distance, ctx.exec)?;
            dets.extend(plan.to_global(local));
        }
        dets.sort_by_key(|d| (d.y, d.x));
        out.claim(format!("detections/{}.csv", stem(path)?))?;
        write_detections_csv(target, &dets)?;
        log::info!("{}: {} detections", path.display(), dets.len());
    }
    Ok(())
}

fn detection_file_for(dir: &Path, path: &Path) -> Result<PathBuf> {
    let f = if dir.is_dir() { dir.join(format!("{}.csv", stem(path)?)) } else { dir.to_path_buf() };
    if !f.is_file() {
        bail!("no detections for {} (expected {})", path.display(), f.display());
    }
    Ok(f)
}

fn classify_cmd(
    ctx: &mut RunContext,
    out: &mut Outputs,
    input: &Path,
    detections: &Path,
    sdcs: &Path,
    center: &Path,
    h: Hypercolumns,
) -> Result<()> {
    let paths = image_paths(input)?;
    let sources: Vec<PathBuf> = paths.iter().map(|p| detection_file_for(detections, p)).collect::<Result<_>>()?;
    for p in &paths {
        out.check(format!("classified/{}.csv", stem(p)?))?;
    }
    let model = load_sdcs(ctx, sdcs, h)?;
    let classifier = load_center(ctx, center)?;
    for (path, src) in paths.iter().zip(&sources) {
        note_input(ctx, path);
        note_input(ctx, src);
        let image = load_image(path)?;
        let mut dets = read_detections(src)?;
        for d in &dets {
            if d.x >= image.width() || d.y >= image.height() {
                bail!("detection ({}, {}) in {} lies outside {}", d.x, d.y, src.display(), path.display());
            }
        }
        for plan in plan_tiles(&image, &stem(path)?, ctx.tile_size)? {
            let idx: Vec<usize> = (0..dets.len()).filter(|&i| plan.owns(dets[i].x, dets[i].y)).collect();
            if idx.is_empty() {
                continue;
            }
            let (ox, oy) = plan.manifest.origin;
            let mut local: Vec<Detection> = idx
                .iter()
                .map(|&i| Detection {
                    x: dets[i].x - ox,
                    y: dets[i].y - oy,
                    ..dets[i]
                })
                .collect();
            let map = aggregate_windows(&plan.image, &model, ctx.config.detector.stride, ctx.exec)?;
            classify_detections(&classifier, &plan.image, &map, &mut local, ctx.exec)?;
            for (&i, d) in idx.iter().zip(local) {
                dets[i].class = d.class;
            }
        }
        let target = out.claim(format!("classified/{}.csv", stem(path)?))?;
        write_detections_csv(&target, &dets)?;
    }
    Ok(())
}

fn train_svm_cmd(ctx: &mut RunContext, out: &mut Outputs, data: &Path) -> Result<()> {
    let model_path = out.check("svm.bin")?;
    let grid_path = out.check("svm_grid.json")?;
    let train = load_split(&split_dir(ctx, data, "train")?)?;
    let validation = load_split(&split_dir(ctx, data, "validation")?)?;
    let (tx, ty) = labelled_features(&train, &ctx.config, ctx.exec)?;
    let (vx, vy) = labelled_features(&validation, &ctx.config, ctx.exec)?;
    log::info!("{} training and {} validation nuclei", tx.len(), vx.len());
    let (model, grid) = train_classifier(&tx, &ty, &vx, &vy, &ctx.config.classical.grid, ctx.exec)?;
    for g in &grid {
        println!("C {:>6}  gamma {:>5}  validation accuracy {:.4}", g.c, g.gamma, g.accuracy);
    }
    if !model.converged() {
        log::warn!("SMO stopped at the iteration cap; max KKT violation {:.2e}", model.max_violation());
    }
    out.claim("svm.bin")?;
    out.claim("svm_grid.json")?;
    model.save(&model_path)?;
    write_json(&grid_path, &grid)
}

fn predict_svm_cmd(ctx: &mut RunContext, out: &mut Outputs, input: &Path, svm: &Path) -> Result<()> {
    let paths = image_paths(input)?;
    for p in &paths {
        out.check(format!("classified/{}.csv", stem(p)?))?;
    }
    note_input(ctx, svm);
    let model = SvmModel::load(svm).with_context(|| format!("loading SVM {}", svm.display()))?;
    for path in &paths {
        note_input(ctx, path);
        let image = load_image(path)?;
        let mut dets = Vec::new();
        for plan in plan_tiles(&image, &stem(path)?, ctx.tile_size)? {
            let (mask, _) = tissue_mask(&plan.image, &ctx.config.detector.tissue);
            let local = classify_segments(&model, &plan.image, &ctx.config, &mask, ctx.exec)?;
            dets.extend(plan.to_global(local));
        }
        dets.sort_by_key(|d| (d.y, d.x));
        let target = out.claim(format!("classified/{}.csv", stem(path)?))?;
        write_detections_csv(&target, &dets)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct TileKi67 {
    image_id: String,
    detections: usize,
    truths: usize,
    ki67_truth: Option<f64>,
    ki67_predicted: Option<f64>,
}

fn classes_of(dets: &[Detection], src: &Path) -> Result<Vec<CellClass>> {
    dets.iter()
        .map(|d| d.class.with_context(|| format!("{} has unclassified detections; run `sdcs classify` first", src.display())))
        .collect()
}

fn evaluate_cmd(ctx: &mut RunContext, out: &mut Outputs, detections: &Path, truth: &Path) -> Result<()> {
    let json_path = out.check("metrics.json")?;
    let text_path = out.check("metrics.txt")?;
    let tiles_path = out.check("tiles.json")?;
    if !truth.is_dir() {
        bail!("annotation directory {} does not exist", truth.display());
    }
    if !detections.is_dir() {
        bail!("detection directory {} does not exist", detections.display());
    }
    note_input(ctx, truth);
    note_input(ctx, detections);
    let mut ann_files: Vec<PathBuf> = std::fs::read_dir(truth)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    ann_files.retain(|p| p.extension().is_some_and(|e| e == "json"));
    ann_files.sort();
    if ann_files.is_empty() {
        bail!("no annotation files in {}", truth.display());
    }
    let mut matches = Vec::new();
    let mut per_tile = Vec::new();
    for ann_path in &ann_files {
        let set = AnnotationSet::load(ann_path).with_context(|| format!("reading {}", ann_path.display()))?;
        let det_path = detections.join(format!("{}.csv", stem(ann_path)?));
        if !det_path.is_file() {
            bail!("missing detections for {}: {} not found", set.image_id, det_path.display());
        }
        let dets = read_detections(&det_path)?;
        let det_classes = classes_of(&dets, &det_path)?;
        let truth_classes: Vec<CellClass> = set.cells.iter().map(|c| c.class).collect();
        let pts: Vec<(f64, f64)> = dets.iter().map(|d| (d.x as f64, d.y as f64)).collect();
        let centers: Vec<(f64, f64)> = set.cells.iter().map(|c| (c.x, c.y)).collect();
        per_tile.push(TileKi67 {
            image_id: set.image_id.clone(),
            detections: dets.len(),
            truths: centers.len(),
            ki67_truth: ki67_index_of(&truth_classes).ok(),
            ki67_predicted: ki67_index_of(&det_classes).ok(),
        });
        matches.push(TileMatch {
            matching: match_detections(&pts, &centers, ctx.config.detector.match_radius),
            detection_classes: det_classes,
            truth_classes,
        });
    }
    let report = pooled_metrics(&matches)?;
    print!("{}", report.to_text());
    out.claim("metrics.json")?;
    out.claim("metrics.txt")?;
    out.claim("tiles.json")?;
    write_json(&json_path, &report)?;
    std::fs::write(&text_path, report.to_text()).with_context(|| format!("writing {}", text_path.display()))?;
    write_json(&tiles_path, &per_tile)
}

#[derive(Debug, Serialize)]
struct Score {
    image_id: String,
    counts: [usize; 4],
    ki67_index: Option<f64>,
}

fn score_cmd(ctx: &mut RunContext, out: &mut Outputs, detections: &Path) -> Result<()> {
    let path = out.check("scores.json")?;
    let files = detection_files(detections)?;
    if files.is_empty() {
        bail!("no detection files in {}", detections.display());
    }
    let mut scores = Vec::with_capacity(files.len());
    for (id, file) in &files {
        note_input(ctx, file);
        let classes = classes_of(&read_detections(file)?, file)?;
        let mut counts = [0usize; 4];
        for c in &classes {
            counts[c.index()] += 1;
        }
        let ki67 = ki67_index_of(&classes).ok();
        match ki67 {
            Some(v) => println!("{id}: {v:.2}%"),
            None => println!("{id}: no tumour nuclei"),
        }
        scores.push(Score {
            image_id: id.clone(),
            counts,
            ki67_index: ki67,
        });
    }
    out.claim("scores.json")?;
    write_json(&path, &scores)
}

fn color_of(class: Option<CellClass>) -> [u8; 3] {
    class
        .and_then(|c| CLASS_COLORS.iter().find(|(k, _)| *k == c).map(|(_, rgb)| *rgb))
        .unwrap_or(UNCLASSIFIED_COLOR)
}

/// Ring of radius 4 to 5 px plus a center dot.
pub fn draw_markers(image: &RasterImage, detections: &[Detection]) -> RasterImage {
    let mut img = image.clone();
    for d in detections {
        let rgb = color_of(d.class);
        for dy in -5i64..=5 {
            for dx in -5i64..=5 {
                let r2 = dx * dx + dy * dy;
                if !((16..=25).contains(&r2) || r2 <= 1) {
                    continue;
                }
                let (x, y) = (d.x as i64 + dx, d.y as i64 + dy);
                if img.contains(x, y) {
                    img.put(x as usize, y as usize, rgb);
                }
            }
        }
    }
    img
}

fn overlay_cmd(ctx: &mut RunContext, out: &mut Outputs, input: &Path, detections: &Path) -> Result<()> {
    let paths = image_paths(input)?;
    let sources: Vec<PathBuf> = paths.iter().map(|p| detection_file_for(detections, p)).collect::<Result<_>>()?;
    for p in &paths {
        out.check(format!("overlay/{}.png", stem(p)?))?;
    }
    for (path, src) in paths.iter().zip(&sources) {
        note_input(ctx, path);
        note_input(ctx, src);
        let drawn = draw_markers(&load_image(path)?, &read_detections(src)?);
        let target = out.claim(format!("overlay/{}.png", stem(path)?))?;
        drawn.save(&target)?;
    }
    Ok(())
}

fn tile_cmd(ctx: &mut RunContext, out: &mut Outputs, input: &Path) -> Result<()> {
    let manifest_path = out.check("tiles/manifest.json")?;
    note_input(ctx, input);
    let image = load_image(input)?;
    let id = stem(input)?;
    let mut manifests = Vec::new();
    for (mut m, tile) in tile_image(&image, &id, ctx.tile_size)? {
        m.tissue_fraction = Some(tissue_mask(&tile, &ctx.config.detector.tissue).1);
        let target = out.claim(format!("tiles/{id}_x{}_y{}.png", m.origin.0, m.origin.1))?;
        tile.save(&target)?;
        manifests.push(m);
    }
    out.claim("tiles/manifest.json")?;
    write_json(&manifest_path, &manifests)
}

#[derive(Debug, Serialize)]
struct VariantSummary {
    name: String,
    detection_f1: f64,
    matched_accuracy: f64,
    overall_accuracy: f64,
    max_ki67_abs_error: Option<f64>,
    seconds: f64,
}

fn benchmark_cmd(ctx: &RunContext, out: &mut Outputs, variants: &[VariantArg]) -> Result<()> {
    let summary_path = out.check("summary.json")?;
    let chosen: Vec<Variant> = variants
        .iter()
        .map(|v| match v {
            VariantArg::Integrated => Variant::Integrated,
            VariantArg::Conv5 => Variant::Conv5,
            VariantArg::Handcrafted => Variant::Handcrafted,
        })
        .collect();
    for v in &chosen {
        out.check(v.name())?;
    }
    let runs = run_benchmark(&ctx.config, &chosen, ctx.exec)?;
    let mut summary = Vec::new();
    for run in &runs {
        let dir = out.claim(&run.report.name)?;
        run.write(&dir)?;
        let m = &run.report.metrics;
        let s = VariantSummary {
            name: run.report.name.clone(),
            detection_f1: m.detection.f1,
            matched_accuracy: m.matched_accuracy,
            overall_accuracy: m.overall_accuracy,
            max_ki67_abs_error: run.report.max_ki67_error(),
            seconds: run.total_seconds(),
        };
        println!(
            "{:<12} detection F1 {:.4}  matched accuracy {:.4}  overall accuracy {:.4}  max Ki67 error {}  {:.0} s",
            s.name,
            s.detection_f1,
            s.matched_accuracy,
            s.overall_accuracy,
            s.max_ki67_abs_error.map_or("n/a".to_string(), |e| format!("{e:.2} pp")),
            s.seconds
        );
        summary.push(s);
    }
    out.claim("summary.json")?;
    write_json(&summary_path, &summary)
}
