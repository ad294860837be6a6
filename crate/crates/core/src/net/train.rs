use super::layers::{conv_relu_backward, ParamGrads};
use super::mask::{build_training_mask, SparseMask};
use super::{sample_sparse, SdcsConfig, SdcsModel};
use crate::annotation::AnnotatedCell;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::raster::RasterImage;
use crate::tensor::{
    concat_backward, conv_backward, maxpool2x2_backward, upsample_bilinear_backward,
    weighted_cross_entropy, SgdState, Shape, Tensor,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A patch with its sparse labeled pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPatch {
    pub image: RasterImage,
    pub mask: SparseMask,
}

/// Mean training loss and sampled-pixel accuracy of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Cuts `patches_per_tile` patches from each annotated tile. Three out of
/// four are centred near a random annotation (offset by up to `jitter`),
/// the rest anywhere in the tile.
pub fn sample_training_patches(
    tiles: &[(&RasterImage, &[AnnotatedCell])],
    config: &SdcsConfig,
) -> Result<Vec<TrainingPatch>> {
    config.validate()?;
    let p = config.patch_size;
    let t = &config.training;
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
    let mut out = Vec::with_capacity(tiles.len() * t.patches_per_tile);
    for (img, cells) in tiles {
        let (w, h) = (img.width(), img.height());
        if w < p || h < p {
            return Err(Error::invalid(
                "sample_training_patches",
                format!("tile {w}x{h} smaller than patch {p}"),
            ));
        }
        for k in 0..t.patches_per_tile {
            let (cx, cy) = if !cells.is_empty() && k % 4 != 3 {
                let c = &cells[rng.random_range(0..cells.len())];
                let j = t.jitter as f64;
                let (ox, oy) = if j > 0.0 {
                    (rng.random_range(-j..=j), rng.random_range(-j..=j))
                } else {
                    (0.0, 0.0)
                };
                (c.x + ox, c.y + oy)
            } else {
                (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64))
            };
            let x0 = ((cx - p as f64 / 2.0).round().max(0.0) as usize).min(w - p);
            let y0 = ((cy - p as f64 / 2.0).round().max(0.0) as usize).min(h - p);
            let reach = config.label_disk_radius as f64 + 1.0;
            let local: Vec<AnnotatedCell> = cells
                .iter()
                .map(|c| AnnotatedCell {
                    x: c.x - x0 as f64,
                    y: c.y - y0 as f64,
                    class: c.class,
                })
                .filter(|c| {
                    c.x > -reach && c.y > -reach && c.x < p as f64 + reach && c.y < p as f64 + reach
                })
                .collect();
            let mask = build_training_mask(&local, p, config, &mut rng);
            out.push(TrainingPatch {
                image: img.crop(x0, y0, p, p)?,
                mask,
            });
        }
    }
    Ok(out)
}

struct PatchResult {
    loss: f64,
    correct: usize,
    samples: usize,
    grads: ParamGrads,
}

fn patch_gradients(model: &SdcsModel, patch: &TrainingPatch) -> Result<PatchResult> {
    let cfg = model.config();
    let (stack, cache) = model.forward_cached(&patch.image)?;
    let samples = sample_sparse(&stack, &patch.mask.points)?;
    let (a1, a2, probs) = model.head_activations(&samples.descriptors)?;
    let (loss, dlogits) = weighted_cross_entropy(&probs, &patch.mask.labels, &patch.mask.weights)?;
    let k = probs.shape().c;
    let correct = (0..samples.len())
        .filter(|&i| {
            let mut best = 0;
            for c in 1..k {
                if probs.at(0, c, 0, i) > probs.at(0, best, 0, i) {
                    best = c;
                }
            }
            best == patch.mask.labels[i]
        })
        .count();

    let mut grads = ParamGrads::zeros(model.layers());
    let t = model.trunk_len();
    let head = model.head();
    let g3 = conv_backward(&a2, &head[2], &dlogits)?;
    grads.add(t + 2, &g3.weight, &g3.bias);
    let d_a1 = conv_relu_backward(&a1, &a2, &head[1], &g3.input, &mut grads, t + 1)?;
    let d_desc = conv_relu_backward(&samples.descriptors, &a1, &head[0], &d_a1, &mut grads, t)?;

    // scatter descriptor gradients back onto the dense stack
    let p = cfg.patch_size;
    let c = stack.total_channels();
    let mut d_stack = Tensor::zeros(Shape::new(1, c, p, p));
    for ch in 0..c {
        let src = d_desc.plane(0, ch);
        let dst = d_stack.plane_mut(0, ch);
        for (&g, &(x, y)) in src.iter().zip(&samples.points) {
            dst[y * p + x] += g;
        }
    }
    let parts = concat_backward(&d_stack, stack.block_widths())?;
    let depth = cache.block_shapes.len();
    let mut block_grads: Vec<Option<Tensor>> = vec![None; depth];
    for (part, &b) in parts.iter().zip(&cfg.hypercolumn_blocks) {
        block_grads[b - 1] = Some(upsample_bilinear_backward(cache.block_shapes[b - 1], part)?);
    }

    let mut first_conv = Vec::with_capacity(depth);
    let mut layer = 0;
    for spec in cfg.blocks.iter().take(depth) {
        first_conv.push(layer);
        layer += spec.convs;
    }
    let mut from_above: Option<Tensor> = None;
    for b in (0..depth).rev() {
        let mut g = match (block_grads[b].take(), from_above.take()) {
            (Some(mut a), Some(bg)) => {
                for (x, y) in a.data_mut().iter_mut().zip(bg.data()) {
                    *x += y;
                }
                a
            }
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => continue,
        };
        for l in (first_conv[b]..first_conv[b] + cfg.blocks[b].convs).rev() {
            g = conv_relu_backward(
                &cache.conv_inputs[l],
                &cache.conv_outputs[l],
                &model.layers()[l],
                &g,
                &mut grads,
                l,
            )?;
        }
        if b > 0 {
            from_above = Some(maxpool2x2_backward(&cache.pools[b - 1], &g)?);
        }
    }
    Ok(PatchResult {
        loss,
        correct,
        samples: samples.len(),
        grads,
    })
}

/// Minibatch momentum SGD on the sparse weighted cross-entropy.
///
/// Per-patch gradients inside a batch may be computed in parallel; they are
/// merged in batch order, so the result is identical for either execution
/// mode.
pub fn train_sdcs(
    mut model: SdcsModel,
    data: &[TrainingPatch],
    exec: Execution,
) -> Result<(SdcsModel, Vec<EpochStats>)> {
    if data.is_empty() {
        return Err(Error::invalid("train_sdcs", "empty training set"));
    }
    let p = model.config().patch_size;
    if let Some(bad) = data.iter().find(|d| d.image.width() != p || d.image.height() != p) {
        return Err(Error::shape(
            "train_sdcs",
            format!("patch {}x{} but network expects {p}", bad.image.width(), bad.image.height()),
        ));
    }
    let t = model.config().training.clone();
    let mut sgd = SgdState::new(t.learning_rate, t.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(t.epochs);
    for epoch in 1..=t.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for batch in order.chunks(t.batch_size) {
            let results = par::try_map(exec, batch, |&i| patch_gradients(&model, &data[i]))?;
            let mut total = ParamGrads::zeros(model.layers());
            for r in &results {
                if !r.loss.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                loss_sum += r.loss;
                correct += r.correct;
                seen += r.samples;
                total.merge(&r.grads);
            }
            total.scale(1.0 / batch.len() as f32);
            total.apply(model.layers_mut(), &mut sgd).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence { epoch },
                other => other,
            })?;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / seen.max(1) as f64,
        };
        log::debug!("sdcs epoch {epoch}: loss {:.4} acc {:.4}", stats.loss, stats.accuracy);
        curve.push(stats);
    }
    Ok((model, curve))
}
