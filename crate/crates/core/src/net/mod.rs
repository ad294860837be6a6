//! Hypercolumn detection and segmentation network.
//!
//! A VGG-style trunk of 3x3 conv blocks (max-pooled between blocks) feeds a
//! hypercolumn: the last post-ReLU activation of selected blocks, upsampled
//! to patch resolution and stacked along channels. A perceptron of two
//! hidden 1x1 layers maps each pixel's hypercolumn to class probabilities.

pub(crate) mod layers;
mod mask;
mod train;

pub use mask::{build_training_mask, SparseMask};
pub use train::{sample_training_patches, train_sdcs, EpochStats, TrainingPatch};

use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::tensor::container;
use crate::tensor::{
    concat_channels, he_normal, maxpool2x2, softmax_channels, upsample_bilinear, Conv2d,
    KernelSize, Shape, Tensor,
};
use layers::{conv_records, conv_relu, convs_from_records, image_tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"SDCS";
const WEIGHTS_VERSION: u32 = 1;

/// One trunk block: `convs` 3x3 convolutions of `width` output channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub width: usize,
    pub convs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdcsTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    /// Training patches cut per annotated tile.
    pub patches_per_tile: usize,
    /// Maximum offset of a patch center from the annotation it is cut around.
    pub jitter: usize,
    pub seed: u64,
}

impl Default for SdcsTraining {
    fn default() -> Self {
        SdcsTraining {
            epochs: 12,
            batch_size: 8,
            learning_rate: 0.01,
            momentum: 0.9,
            patches_per_tile: 8,
            jitter: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdcsConfig {
    pub patch_size: usize,
    pub blocks: Vec<BlockSpec>,
    /// 1-based indices of blocks stacked into the hypercolumn.
    pub hypercolumn_blocks: Vec<usize>,
    pub head_widths: [usize; 2],
    pub num_classes: usize,
    pub sparse_samples_per_patch: usize,
    pub label_disk_radius: usize,
    pub training: SdcsTraining,
}

impl Default for SdcsConfig {
    /// VGG16 trunk widths with the hypercolumn over blocks 1, 2 and 5.
    fn default() -> Self {
        let spec = |width, convs| BlockSpec { width, convs };
        SdcsConfig {
            patch_size: 64,
            blocks: vec![spec(64, 2), spec(128, 2), spec(256, 3), spec(512, 3), spec(512, 3)],
            hypercolumn_blocks: vec![1, 2, 5],
            head_widths: [256, 256],
            num_classes: 3,
            sparse_samples_per_patch: 512,
            label_disk_radius: 3,
            training: SdcsTraining::default(),
        }
    }
}

impl SdcsConfig {
    /// Narrow single-conv-per-block variant sized for CPU benchmarks.
    pub fn compact() -> Self {
        let spec = |width| BlockSpec { width, convs: 1 };
        SdcsConfig {
            blocks: vec![spec(16), spec(32), spec(48), spec(48), spec(48)],
            head_widths: [32, 32],
            ..SdcsConfig::default()
        }
    }

    /// The same trunk with only the deepest block feeding the head.
    pub fn deepest_only(&self) -> Self {
        SdcsConfig {
            hypercolumn_blocks: vec![self.blocks.len()],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("sdcs_config", m));
        if self.blocks.is_empty() || self.blocks.iter().any(|b| b.width == 0 || b.convs == 0) {
            return bad("every block needs a positive width and conv count".into());
        }
        if self.hypercolumn_blocks.is_empty() {
            return bad("hypercolumn needs at least one block".into());
        }
        let mut seen = self.hypercolumn_blocks.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.hypercolumn_blocks.len() {
            return bad("duplicate hypercolumn block".into());
        }
        if let Some(&b) = self
            .hypercolumn_blocks
            .iter()
            .find(|&&b| b == 0 || b > self.blocks.len())
        {
            return bad(format!("hypercolumn block {b} not among blocks 1..={}", self.blocks.len()));
        }
        let deepest = *seen.last().expect("non-empty");
        let factor = 1usize << (deepest - 1);
        if self.patch_size == 0 || self.patch_size % factor != 0 {
            return bad(format!(
                "patch size {} not divisible by 2^{} required by block {deepest}",
                self.patch_size,
                deepest - 1
            ));
        }
        if self.head_widths.contains(&0) {
            return bad("head widths must be positive".into());
        }
        if self.num_classes < 2 {
            return bad("need at least two classes".into());
        }
        if self.sparse_samples_per_patch == 0 {
            return bad("no sparse samples per patch".into());
        }
        if self.training.batch_size == 0 {
            return bad("batch size 0".into());
        }
        Ok(())
    }

    pub fn total_channels(&self) -> usize {
        self.hypercolumn_blocks
            .iter()
            .map(|&b| self.blocks[b - 1].width)
            .sum()
    }

    /// Trunk blocks that must actually run.
    fn depth(&self) -> usize {
        *self.hypercolumn_blocks.iter().max().unwrap_or(&0)
    }

    fn layout(&self) -> Vec<(KernelSize, usize, usize)> {
        let mut out = Vec::new();
        let mut c_in = 3;
        for b in &self.blocks {
            for _ in 0..b.convs {
                out.push((KernelSize::Three, c_in, b.width));
                c_in = b.width;
            }
        }
        out.push((KernelSize::One, self.total_channels(), self.head_widths[0]));
        out.push((KernelSize::One, self.head_widths[0], self.head_widths[1]));
        out.push((KernelSize::One, self.head_widths[1], self.num_classes));
        out
    }
}

/// Per-pixel hypercolumn descriptors of one patch: `(1, total_channels, P, P)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypercolumnStack {
    tensor: Tensor,
    block_widths: Vec<usize>,
}

impl HypercolumnStack {
    pub fn new(tensor: Tensor, block_widths: Vec<usize>) -> Result<Self> {
        let s = tensor.shape();
        if s.n != 1 || block_widths.iter().sum::<usize>() != s.c {
            return Err(Error::shape(
                "hypercolumn",
                format!("tensor {s} for block widths {block_widths:?}"),
            ));
        }
        Ok(HypercolumnStack {
            tensor,
            block_widths,
        })
    }

    pub fn total_channels(&self) -> usize {
        self.tensor.shape().c
    }

    pub fn block_widths(&self) -> &[usize] {
        &self.block_widths
    }

    pub fn size(&self) -> (usize, usize) {
        let s = self.tensor.shape();
        (s.w, s.h)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn fiber(&self, x: usize, y: usize) -> Vec<f32> {
        (0..self.total_channels())
            .map(|c| self.tensor.at(0, c, y, x))
            .collect()
    }
}

/// Descriptors at chosen pixels, stored as a `(1, C, 1, N)` tensor so the
/// head runs the exact kernels used for dense prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSampleSet {
    pub points: Vec<(usize, usize)>,
    pub descriptors: Tensor,
}

impl SparseSampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn descriptor(&self, i: usize) -> Vec<f32> {
        let c = self.descriptors.shape().c;
        (0..c).map(|ch| self.descriptors.at(0, ch, 0, i)).collect()
    }
}

/// Gathers the channel fiber at each `(x, y)` point, in order.
pub fn sample_sparse(stack: &HypercolumnStack, points: &[(usize, usize)]) -> Result<SparseSampleSet> {
    let (w, h) = stack.size();
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| x >= w || y >= h) {
        return Err(Error::OutOfBounds {
            x: x as i64,
            y: y as i64,
            width: w,
            height: h,
        });
    }
    let c = stack.total_channels();
    let n = points.len();
    let mut d = Tensor::zeros(Shape::new(1, c, 1, n));
    for ch in 0..c {
        let plane = stack.tensor.plane(0, ch);
        let out = d.plane_mut(0, ch);
        for (o, &(x, y)) in out.iter_mut().zip(points) {
            *o = plane[y * w + x];
        }
    }
    Ok(SparseSampleSet {
        points: points.to_vec(),
        descriptors: d,
    })
}

/// Dense class probabilities `(1, classes, P, P)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelPredictionMap {
    pub probs: Tensor,
}

impl PixelPredictionMap {
    pub fn num_classes(&self) -> usize {
        self.probs.shape().c
    }

    pub fn prob(&self, class: usize, x: usize, y: usize) -> f32 {
        self.probs.at(0, class, y, x)
    }

    pub fn argmax(&self, x: usize, y: usize) -> usize {
        let mut best = 0;
        for c in 1..self.num_classes() {
            if self.prob(c, x, y) > self.prob(best, x, y) {
                best = c;
            }
        }
        best
    }
}

/// Intermediate activations kept for backpropagation.
pub(crate) struct ForwardCache {
    /// Input of every trunk conv, in layer order.
    pub conv_inputs: Vec<Tensor>,
    /// Post-ReLU output of every trunk conv.
    pub conv_outputs: Vec<Tensor>,
    pub pools: Vec<crate::tensor::PoolIndices>,
    /// Shape of the last activation of every executed block.
    pub block_shapes: Vec<Shape>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdcsModel {
    config: SdcsConfig,
    convs: Vec<Conv2d<f32>>,
}

impl SdcsModel {
    /// He-initialised weights; the bias of every layer starts at zero.
    pub fn new(config: SdcsConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = config
            .layout()
            .into_iter()
            .map(|(k, ci, co)| he_normal(&mut rng, k, ci, co))
            .collect();
        Ok(SdcsModel { config, convs })
    }

    pub fn zeros(config: SdcsConfig) -> Result<Self> {
        config.validate()?;
        let convs = config
            .layout()
            .into_iter()
            .map(|(k, ci, co)| Conv2d::zeros(k, ci, co))
            .collect();
        Ok(SdcsModel { config, convs })
    }

    pub fn config(&self) -> &SdcsConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Conv2d<f32>] {
        &self.convs
    }

    pub fn layers_mut(&mut self) -> &mut [Conv2d<f32>] {
        &mut self.convs
    }

    pub(crate) fn trunk_len(&self) -> usize {
        self.convs.len() - 3
    }

    pub fn head(&self) -> &[Conv2d<f32>] {
        &self.convs[self.trunk_len()..]
    }

    pub fn head_mut(&mut self) -> &mut [Conv2d<f32>] {
        let t = self.trunk_len();
        &mut self.convs[t..]
    }

    fn check_patch(&self, patch: &RasterImage) -> Result<()> {
        let p = self.config.patch_size;
        if patch.width() != p || patch.height() != p {
            return Err(Error::shape(
                "sdcs",
                format!("patch is {}x{}, network expects {p}x{p}", patch.width(), patch.height()),
            ));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, patch: &RasterImage) -> Result<(HypercolumnStack, ForwardCache)> {
        self.check_patch(patch)?;
        let p = self.config.patch_size;
        let depth = self.config.depth();
        let mut cache = ForwardCache {
            conv_inputs: Vec::new(),
            conv_outputs: Vec::new(),
            pools: Vec::new(),
            block_shapes: Vec::new(),
        };
        let mut x = image_tensor(patch);
        let mut layer = 0;
        let mut taps: Vec<Option<Tensor>> = vec![None; depth];
        for (b, spec) in self.config.blocks.iter().take(depth).enumerate() {
            if b > 0 {
                let (pooled, idx) = maxpool2x2(&x)?;
                cache.pools.push(idx);
                x = pooled;
            }
            for _ in 0..spec.convs {
                let y = conv_relu(&x, &self.convs[layer])?;
                cache.conv_inputs.push(std::mem::replace(&mut x, y.clone()));
                cache.conv_outputs.push(y);
                layer += 1;
            }
            cache.block_shapes.push(x.shape());
            if self.config.hypercolumn_blocks.contains(&(b + 1)) {
                taps[b] = Some(upsample_bilinear(&x, (p, p))?);
            }
        }
        let parts: Vec<&Tensor> = self
            .config
            .hypercolumn_blocks
            .iter()
            .map(|&b| taps[b - 1].as_ref().expect("tapped block"))
            .collect();
        let widths = self
            .config
            .hypercolumn_blocks
            .iter()
            .map(|&b| self.config.blocks[b - 1].width)
            .collect();
        let stack = HypercolumnStack::new(concat_channels(&parts)?, widths)?;
        Ok((stack, cache))
    }

    pub fn forward_hypercolumns(&self, patch: &RasterImage) -> Result<HypercolumnStack> {
        Ok(self.forward_cached(patch)?.0)
    }

    /// Head logits through the three 1x1 layers; returns `(hidden1, hidden2, probs)`.
    pub(crate) fn head_activations(&self, descriptors: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let h = self.head();
        let expect = h[0].c_in();
        if descriptors.shape().c != expect {
            return Err(Error::shape(
                "head_forward",
                format!("descriptor length {} but head expects {expect}", descriptors.shape().c),
            ));
        }
        let a1 = conv_relu(descriptors, &h[0])?;
        let a2 = conv_relu(&a1, &h[1])?;
        let probs = softmax_channels(&crate::tensor::conv_forward(&a2, &h[2])?)?;
        Ok((a1, a2, probs))
    }

    /// Class distribution for every sample; row `i` belongs to point `i`.
    pub fn head_forward(&self, samples: &SparseSampleSet) -> Result<Vec<Vec<f32>>> {
        let probs = self.head_activations(&samples.descriptors)?.2;
        let k = probs.shape().c;
        Ok((0..samples.len())
            .map(|i| (0..k).map(|c| probs.at(0, c, 0, i)).collect())
            .collect())
    }

    /// Applies the head at every pixel of the patch.
    pub fn predict_mask(&self, patch: &RasterImage) -> Result<PixelPredictionMap> {
        let stack = self.forward_hypercolumns(patch)?;
        let probs = self.head_activations(&stack.tensor)?.2;
        Ok(PixelPredictionMap { probs })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::encode(WEIGHTS_MAGIC, WEIGHTS_VERSION, &conv_records(&self.convs))
    }

    pub fn from_bytes(config: SdcsConfig, bytes: &[u8]) -> Result<Self> {
        config.validate()?;
        let (version, records) = container::decode::<f32>(bytes, WEIGHTS_MAGIC)?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Format(format!("unsupported weights version {version}")));
        }
        let convs = convs_from_records(&records, &config.layout())?;
        Ok(SdcsModel { config, convs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(config: SdcsConfig, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(config, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SdcsConfig {
        SdcsConfig {
            patch_size: 16,
            blocks: vec![
                BlockSpec { width: 4, convs: 1 },
                BlockSpec { width: 6, convs: 2 },
                BlockSpec { width: 5, convs: 1 },
            ],
            hypercolumn_blocks: vec![1, 3],
            head_widths: [7, 5],
            ..SdcsConfig::default()
        }
    }

    #[test]
    fn default_channel_count() {
        assert_eq!(SdcsConfig::default().total_channels(), 704);
        SdcsConfig::default().validate().unwrap();
        SdcsConfig::compact().validate().unwrap();
    }

    #[test]
    fn config_rejects_bad_geometry() {
        let mut c = tiny();
        c.patch_size = 18;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.hypercolumn_blocks = vec![4];
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.head_widths = [0, 3];
        assert!(c.validate().is_err());
    }

    #[test]
    fn stack_shape() {
        let m = SdcsModel::new(tiny(), 1).unwrap();
        let s = m.forward_hypercolumns(&RasterImage::filled(16, 16, [120, 80, 200])).unwrap();
        assert_eq!(s.total_channels(), 9);
        assert_eq!(s.block_widths(), &[4, 5]);
        assert_eq!(s.size(), (16, 16));
    }

    #[test]
    fn wrong_patch_size() {
        let m = SdcsModel::new(tiny(), 1).unwrap();
        assert!(m.predict_mask(&RasterImage::new(8, 8)).is_err());
    }

    #[test]
    fn weights_roundtrip() {
        let m = SdcsModel::new(tiny(), 5).unwrap();
        let back = SdcsModel::from_bytes(tiny(), &m.to_bytes()).unwrap();
        assert_eq!(m, back);
        let mut other = tiny();
        other.head_widths = [8, 5];
        assert!(SdcsModel::from_bytes(other, &m.to_bytes()).is_err());
    }
}
