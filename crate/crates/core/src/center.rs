//! Four-class classification of detected nucleus centers.
//!
//! A compact patch CNN looks at the reflect-padded neighbourhood of a
//! center. Its fourth input channel is a constant plane holding an auxiliary
//! per-center scalar (in the pipeline, the detector's Ki67-positive share at
//! that pixel), so classification is conditioned on the detection stage.

use crate::annotation::CellClass;
use crate::error::{Error, Result};
use crate::net::layers::{conv_records, conv_relu, conv_relu_backward, convs_from_records, ParamGrads};
use crate::net::EpochStats;
use crate::par::{self, Execution};
use crate::raster::RasterImage;
use crate::tensor::{
    container, conv_backward, conv_forward, global_avg_pool, global_avg_pool_backward, he_normal,
    maxpool2x2, maxpool2x2_backward, softmax_channels, weighted_cross_entropy, Conv2d, KernelSize,
    PoolIndices, SgdState, Shape, Tensor,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const PATCH_SIZE: usize = 51;
/// Network input side: the 51 px patch plus one reflected row and column,
/// so two 2x2 poolings divide evenly.
pub const INPUT_SIZE: usize = 52;
pub const CONTEXT_MARGIN: usize = 6;
const FEATURE_SIZE: usize = INPUT_SIZE / 4;
const CONTEXT_SIZE: usize = INPUT_SIZE + 2 * CONTEXT_MARGIN;
pub const WEIGHTS_MAGIC: [u8; 4] = *b"CNTR";
const WEIGHTS_VERSION: u32 = 1;

/// Index `i` mirrored into `0..n` without repeating the edge sample.
pub fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// `w x h` window with top-left corner `(x0, y0)`, reflect-padded where it
/// leaves the tile.
pub fn extract_window(tile: &RasterImage, x0: i64, y0: i64, w: usize, h: usize) -> RasterImage {
    let mut out = RasterImage::new(w, h);
    for y in 0..h {
        let sy = reflect_index(y0 + y as i64, tile.height());
        for x in 0..w {
            let sx = reflect_index(x0 + x as i64, tile.width());
            out.put(x, y, tile.get(sx, sy));
        }
    }
    out
}

/// Odd-sized window centred on a pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterPatch {
    pub center: (usize, usize),
    pub image: RasterImage,
}

pub fn extract_patch(tile: &RasterImage, center: (usize, usize), size: usize) -> Result<CenterPatch> {
    let (x, y) = center;
    if x >= tile.width() || y >= tile.height() {
        return Err(Error::OutOfBounds {
            x: x as i64,
            y: y as i64,
            width: tile.width(),
            height: tile.height(),
        });
    }
    if size % 2 == 0 {
        return Err(Error::invalid("extract_patch", format!("size {size} must be odd")));
    }
    let half = (size / 2) as i64;
    Ok(CenterPatch {
        center,
        image: extract_window(tile, x as i64 - half, y as i64 - half, size, size),
    })
}

/// One of the eight symmetries of the square: bit 0 mirrors columns, bit 1
/// mirrors rows, bit 2 transposes first.
pub fn orient(img: &RasterImage, t: u8) -> RasterImage {
    let n = img.width();
    debug_assert_eq!(n, img.height());
    let mut out = RasterImage::new(n, n);
    for y in 0..n {
        for x in 0..n {
            let (a, b) = if t & 4 != 0 { (y, x) } else { (x, y) };
            let sx = if t & 1 != 0 { n - 1 - a } else { a };
            let sy = if t & 2 != 0 { n - 1 - b } else { b };
            out.put(x, y, img.get(sx, sy));
        }
    }
    out
}

/// All eight orientations of a square patch, identity first.
pub fn augment(img: &RasterImage) -> Result<Vec<RasterImage>> {
    if img.width() != img.height() {
        return Err(Error::invalid("augment", "patch must be square"));
    }
    Ok((0..8).map(|t| orient(img, t)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CenterConfig {
    pub widths: [usize; 3],
    /// Side of the central window of the 13x13 final feature map that is
    /// averaged; 13 gives a global average.
    pub pool_window: usize,
    /// Largest random shift (px) of the training crop around the center.
    pub jitter: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for CenterConfig {
    fn default() -> Self {
        CenterConfig {
            widths: [8, 16, 16],
            pool_window: 1,
            jitter: 3,
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl CenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) || self.batch_size == 0 {
            return Err(Error::invalid("center_config", "widths and batch size must be positive"));
        }
        if self.pool_window == 0 || self.pool_window > FEATURE_SIZE || self.pool_window % 2 == 0 {
            return Err(Error::invalid(
                "center_config",
                format!("pool window {} must be odd and in 1..={FEATURE_SIZE}", self.pool_window),
            ));
        }
        if self.jitter > CONTEXT_MARGIN {
            return Err(Error::invalid(
                "center_config",
                format!("jitter {} exceeds {CONTEXT_MARGIN}", self.jitter),
            ));
        }
        Ok(())
    }

    fn layout(&self) -> Vec<(KernelSize, usize, usize)> {
        let [a, b, c] = self.widths;
        vec![
            (KernelSize::Three, 4, a),
            (KernelSize::Three, a, b),
            (KernelSize::Three, b, c),
            (KernelSize::One, c, 4),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub probs: [f32; 4],
    pub class: CellClass,
    pub confidence: f32,
}

impl ClassPrediction {
    fn from_probs(probs: [f32; 4]) -> Self {
        let mut best = 0;
        for c in 1..4 {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        ClassPrediction {
            probs,
            class: CellClass::from_index(best).expect("four classes"),
            confidence: probs[best],
        }
    }
}

/// Training example: a context window wider than the network input so
/// that jittered crops stay inside real (or reflected) pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterSample {
    pub context: RasterImage,
    pub aux: f32,
    pub class: CellClass,
}

impl CenterSample {
    pub fn new(tile: &RasterImage, center: (usize, usize), aux: f32, class: CellClass) -> Self {
        let off = (PATCH_SIZE / 2 + CONTEXT_MARGIN) as i64;
        CenterSample {
            context: extract_window(
                tile,
                center.0 as i64 - off,
                center.1 as i64 - off,
                CONTEXT_SIZE,
                CONTEXT_SIZE,
            ),
            aux,
            class,
        }
    }

    /// Network input without jitter or reorientation.
    pub fn input(&self) -> RasterImage {
        self.context
            .crop(CONTEXT_MARGIN, CONTEXT_MARGIN, INPUT_SIZE, INPUT_SIZE)
            .expect("context holds the input window")
    }
}

fn input_tensor(img: &RasterImage, aux: f32) -> Tensor {
    let n = img.width() * img.height();
    let mut t = Tensor::zeros(Shape::new(1, 4, img.height(), img.width()));
    let d = t.data_mut();
    for (i, px) in img.as_raw().chunks_exact(3).enumerate() {
        for c in 0..3 {
            d[c * n + i] = px[c] as f32 / 127.5 - 1.0;
        }
    }
    d[3 * n..].fill(aux * 2.0 - 1.0);
    t
}

/// Central `k x k` block of every channel.
fn center_crop(t: &Tensor, k: usize) -> Tensor {
    let s = t.shape();
    let (oy, ox) = ((s.h - k) / 2, (s.w - k) / 2);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, k, k));
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..k {
                for x in 0..k {
                    out.set(n, c, y, x, t.at(n, c, oy + y, ox + x));
                }
            }
        }
    }
    out
}

fn center_crop_backward(shape: Shape, upstream: &Tensor) -> Tensor {
    let k = upstream.shape().h;
    let (oy, ox) = ((shape.h - k) / 2, (shape.w - k) / 2);
    let mut out = Tensor::zeros(shape);
    for n in 0..shape.n {
        for c in 0..shape.c {
            for y in 0..k {
                for x in 0..k {
                    out.set(n, c, oy + y, ox + x, upstream.at(n, c, y, x));
                }
            }
        }
    }
    out
}

struct Cache {
    inputs: [Tensor; 3],
    outputs: [Tensor; 3],
    pools: [PoolIndices; 2],
    pooled: Tensor,
    probs: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CenterClassifier {
    config: CenterConfig,
    convs: Vec<Conv2d<f32>>,
}

impl CenterClassifier {
    pub fn new(config: CenterConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let convs = config
            .layout()
            .into_iter()
            .map(|(k, ci, co)| he_normal(&mut rng, k, ci, co))
            .collect();
        Ok(CenterClassifier { config, convs })
    }

    pub fn config(&self) -> &CenterConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Conv2d<f32>] {
        &self.convs
    }

    fn forward(&self, img: &RasterImage, aux: f32) -> Result<Cache> {
        if img.width() != INPUT_SIZE || img.height() != INPUT_SIZE {
            return Err(Error::shape(
                "center_classifier",
                format!("input {}x{}, expected {INPUT_SIZE}", img.width(), img.height()),
            ));
        }
        let x0 = input_tensor(img, aux);
        let y0 = conv_relu(&x0, &self.convs[0])?;
        let (x1, p0) = maxpool2x2(&y0)?;
        let y1 = conv_relu(&x1, &self.convs[1])?;
        let (x2, p1) = maxpool2x2(&y1)?;
        let y2 = conv_relu(&x2, &self.convs[2])?;
        let pooled = global_avg_pool(&center_crop(&y2, self.config.pool_window));
        let probs = softmax_channels(&conv_forward(&pooled, &self.convs[3])?)?;
        Ok(Cache {
            inputs: [x0, x1, x2],
            outputs: [y0, y1, y2],
            pools: [p0, p1],
            pooled,
            probs,
        })
    }

    /// Class distribution for a 52x52 input window.
    pub fn predict_input(&self, img: &RasterImage, aux: f32) -> Result<ClassPrediction> {
        let p = self.forward(img, aux)?.probs;
        let d = p.data();
        Ok(ClassPrediction::from_probs([d[0], d[1], d[2], d[3]]))
    }

    pub fn classify_center(&self, tile: &RasterImage, center: (usize, usize), aux: f32) -> Result<ClassPrediction> {
        let (x, y) = center;
        if x >= tile.width() || y >= tile.height() {
            return Err(Error::OutOfBounds {
                x: x as i64,
                y: y as i64,
                width: tile.width(),
                height: tile.height(),
            });
        }
        let half = (PATCH_SIZE / 2) as i64;
        let img = extract_window(tile, x as i64 - half, y as i64 - half, INPUT_SIZE, INPUT_SIZE);
        self.predict_input(&img, aux)
    }

    fn gradients(&self, img: &RasterImage, aux: f32, label: usize) -> Result<(f64, bool, ParamGrads)> {
        let c = self.forward(img, aux)?;
        let (loss, dlogits) = weighted_cross_entropy(&c.probs, &[label], &[1.0])?;
        let d = c.probs.data();
        let correct = (0..4).all(|k| k == label || d[k] < d[label]);
        let mut grads = ParamGrads::zeros(&self.convs);
        let g3 = conv_backward(&c.pooled, &self.convs[3], &dlogits)?;
        grads.add(3, &g3.weight, &g3.bias);
        let k = self.config.pool_window;
        let s2 = c.outputs[2].shape();
        let g = global_avg_pool_backward(Shape::new(s2.n, s2.c, k, k), &g3.input)?;
        let g = center_crop_backward(s2, &g);
        let g = conv_relu_backward(&c.inputs[2], &c.outputs[2], &self.convs[2], &g, &mut grads, 2)?;
        let g = maxpool2x2_backward(&c.pools[1], &g)?;
        let g = conv_relu_backward(&c.inputs[1], &c.outputs[1], &self.convs[1], &g, &mut grads, 1)?;
        let g = maxpool2x2_backward(&c.pools[0], &g)?;
        conv_relu_backward(&c.inputs[0], &c.outputs[0], &self.convs[0], &g, &mut grads, 0)?;
        Ok((loss, correct, grads))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::encode(WEIGHTS_MAGIC, WEIGHTS_VERSION, &conv_records(&self.convs))
    }

    pub fn from_bytes(config: CenterConfig, bytes: &[u8]) -> Result<Self> {
        config.validate()?;
        let (version, records) = container::decode::<f32>(bytes, WEIGHTS_MAGIC)?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Format(format!("unsupported weights version {version}")));
        }
        let convs = convs_from_records(&records, &config.layout())?;
        Ok(CenterClassifier { config, convs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(config: CenterConfig, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(config, &bytes)
    }
}

/// Minibatch SGD with a random orientation and up to `jitter` px of shift per
/// sample and epoch.
pub fn train_center_classifier(
    samples: &[CenterSample],
    config: &CenterConfig,
    exec: Execution,
) -> Result<(CenterClassifier, Vec<EpochStats>)> {
    let mut present: Vec<CellClass> = samples.iter().map(|s| s.class).collect();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "center classifier needs at least two classes, got {present:?}"
        )));
    }
    let mut model = CenterClassifier::new(config.clone())?;
    let mut sgd = SgdState::new(config.learning_rate, config.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xce17e5));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let lo = CONTEXT_MARGIN - config.jitter;
        let plan: Vec<(usize, u8, usize, usize)> = order
            .iter()
            .map(|&i| {
                (
                    i,
                    rng.random_range(0..8u8),
                    lo + rng.random_range(0..=2 * config.jitter),
                    lo + rng.random_range(0..=2 * config.jitter),
                )
            })
            .collect();
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in plan.chunks(config.batch_size) {
            let results = par::try_map(exec, batch, |&(i, t, jx, jy)| {
                let s = &samples[i];
                let crop = s.context.crop(jx, jy, INPUT_SIZE, INPUT_SIZE)?;
                model.gradients(&orient(&crop, t), s.aux, s.class.index())
            })?;
            let mut total = ParamGrads::zeros(&model.convs);
            for (loss, ok, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                loss_sum += loss;
                correct += *ok as usize;
                total.merge(g);
            }
            total.scale(1.0 / batch.len() as f32);
            total.apply(&mut model.convs, &mut sgd)?;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / samples.len() as f64,
            accuracy: correct as f64 / samples.len() as f64,
        };
        log::debug!("center epoch {epoch}: loss {:.4} acc {:.4}", stats.loss, stats.accuracy);
        curve.push(stats);
    }
    Ok((model, curve))
}
