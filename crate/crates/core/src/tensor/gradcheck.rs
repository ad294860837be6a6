//! Finite-difference gradient checking.
//!
//! Analytic gradients come from the production `f32` backward kernels. The
//! numeric side perturbs each input of a scalar probe loss
//! `L(x) = sum(upstream * forward(x))` by a central difference, evaluating
//! the forward pass in `f64`.

use super::{
    concat_backward, concat_channels, conv_backward, conv_forward, global_avg_pool,
    global_avg_pool_backward, maxpool2x2, weighted_cross_entropy, maxpool2x2_backward, relu, relu_backward,
    softmax_backward, softmax_channels, upsample_bilinear, upsample_bilinear_backward, Conv2d,
    KernelSize, Shape, Tensor,
};
use crate::error::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step used for central differences.
pub const STEP: f64 = 1e-3;

/// Norm-wise relative error `|a - n| / max(|a|, |n|)`; zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom < 1e-12 {
        0.0
    } else {
        diff / denom
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Outcome of one layer check.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub shape: Shape,
    /// Worst relative error across the checked gradients (input and params).
    pub max_rel_error: f64,
}

pub fn check_conv(input: &Tensor<f32>, conv: &Conv2d<f32>, upstream: &Tensor<f32>) -> Result<LayerCheck> {
    let grads = conv_backward(input, conv, upstream)?;
    let up = widen(upstream.data());
    let conv64: Conv2d<f64> = conv.cast();
    let s = input.shape();

    let num_in = numeric_gradient(&widen(input.data()), STEP, |x| {
        let t = Tensor::from_vec(s, x.to_vec()).expect("shape");
        dot(conv_forward(&t, &conv64).expect("forward").data(), &up)
    });
    let input64: Tensor<f64> = input.cast();
    let ws = conv.weight().shape();
    let num_w = numeric_gradient(&widen(conv.weight().data()), STEP, |w| {
        let c = Conv2d::new(conv.kernel(), Tensor::from_vec(ws, w.to_vec()).expect("shape"), conv64.bias().to_vec())
            .expect("conv");
        dot(conv_forward(&input64, &c).expect("forward").data(), &up)
    });
    let num_b = numeric_gradient(&widen(conv.bias()), STEP, |b| {
        let c = Conv2d::new(conv.kernel(), conv64.weight().clone(), b.to_vec()).expect("conv");
        dot(conv_forward(&input64, &c).expect("forward").data(), &up)
    });
    let err = relative_error(&widen(grads.input.data()), &num_in)
        .max(relative_error(&widen(&grads.weight), &num_w))
        .max(relative_error(&widen(&grads.bias), &num_b));
    Ok(LayerCheck {
        layer: match conv.kernel() {
            KernelSize::One => "conv1x1",
            KernelSize::Three => "conv3x3",
        },
        shape: s,
        max_rel_error: err,
    })
}

fn check_unary(
    layer: &'static str,
    input: &Tensor<f32>,
    upstream: &Tensor<f32>,
    analytic: Vec<f32>,
    forward: impl Fn(&Tensor<f64>) -> Tensor<f64>,
) -> LayerCheck {
    let s = input.shape();
    let up = widen(upstream.data());
    let num = numeric_gradient(&widen(input.data()), STEP, |x| {
        let t = Tensor::from_vec(s, x.to_vec()).expect("shape");
        dot(forward(&t).data(), &up)
    });
    LayerCheck {
        layer,
        shape: s,
        max_rel_error: relative_error(&widen(&analytic), &num),
    }
}

pub fn check_relu(input: &Tensor<f32>, upstream: &Tensor<f32>) -> Result<LayerCheck> {
    let g = relu_backward(input, upstream)?;
    Ok(check_unary("relu", input, upstream, g.into_data(), |t| relu(t)))
}

pub fn check_maxpool(input: &Tensor<f32>, upstream: &Tensor<f32>) -> Result<LayerCheck> {
    let (_, idx) = maxpool2x2(input)?;
    let g = maxpool2x2_backward(&idx, upstream)?;
    Ok(check_unary("maxpool2x2", input, upstream, g.into_data(), |t| {
        maxpool2x2(t).expect("even dims").0
    }))
}

pub fn check_upsample(input: &Tensor<f32>, target: (usize, usize), upstream: &Tensor<f32>) -> Result<LayerCheck> {
    let g = upsample_bilinear_backward(input.shape(), upstream)?;
    Ok(check_unary("upsample_bilinear", input, upstream, g.into_data(), |t| {
        upsample_bilinear(t, target).expect("target")
    }))
}

pub fn check_softmax(input: &Tensor<f32>, upstream: &Tensor<f32>) -> Result<LayerCheck> {
    let p = softmax_channels(input)?;
    let g = softmax_backward(&p, upstream)?;
    Ok(check_unary("softmax", input, upstream, g.into_data(), |t| {
        softmax_channels(t).expect("finite")
    }))
}

pub fn check_global_avg_pool(input: &Tensor<f32>, upstream: &Tensor<f32>) -> Result<LayerCheck> {
    let g = global_avg_pool_backward(input.shape(), upstream)?;
    Ok(check_unary("global_avg_pool", input, upstream, g.into_data(), |t| global_avg_pool(t)))
}

/// Checks concatenation of `input` split as `[first, rest]` channels.
pub fn check_concat(input: &Tensor<f32>, first: usize, upstream: &Tensor<f32>) -> Result<LayerCheck> {
    let s = input.shape();
    let parts = concat_backward(upstream, &[first, s.c - first])?;
    let analytic = concat_channels(&[&parts[0], &parts[1]])?.into_data();
    Ok(check_unary("concat", input, upstream, analytic, |t| {
        let split = concat_backward(t, &[first, s.c - first]).expect("split");
        concat_channels(&[&split[0], &split[1]]).expect("concat")
    }))
}

/// Softmax followed by the weighted cross-entropy, differentiated with
/// respect to the logits.
pub fn check_cross_entropy(logits: &Tensor<f32>, labels: &[usize], weights: &[f32]) -> Result<LayerCheck> {
    let s = logits.shape();
    let (_, g) = weighted_cross_entropy(&softmax_channels(logits)?, labels, weights)?;
    let total: f64 = weights.iter().map(|&w| w as f64).sum();
    let p = s.plane();
    let num = numeric_gradient(&widen(logits.data()), STEP, |x| {
        let t = Tensor::from_vec(s, x.to_vec()).expect("shape");
        let probs = softmax_channels(&t).expect("finite");
        let mut loss = 0.0;
        for n in 0..s.n {
            for i in 0..p {
                let pos = n * p + i;
                let py = probs.data()[n * s.c * p + labels[pos] * p + i];
                loss -= weights[pos] as f64 / total * py.ln();
            }
        }
        loss
    });
    Ok(LayerCheck {
        layer: "cross_entropy",
        shape: s,
        max_rel_error: relative_error(&widen(g.data()), &num),
    })
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f32> {
    let data = (0..shape.len()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Values bounded away from zero so ReLU's kink is never straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f32> {
    let data = (0..shape.len())
        .map(|_| {
            let m = rng.random_range(0.05f32..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Distinct values spaced well beyond the difference step, so no pooling
/// window has a near-tie.
fn distinct_values(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f32> {
    let mut data: Vec<f32> = (0..shape.len()).map(|i| i as f32 * 0.02 - 1.0).collect();
    data.shuffle(rng);
    Tensor::from_vec(shape, data).expect("shape")
}

fn random_shape(rng: &mut ChaCha8Rng, even: bool) -> Shape {
    let mut dim = |lo: usize, hi: usize| rng.random_range(lo..=hi);
    let (n, c) = (dim(1, 2), dim(1, 3));
    let (mut h, mut w) = (dim(2, 6), dim(2, 6));
    if even {
        h += h % 2;
        w += w % 2;
    }
    Shape::new(n, c, h, w)
}

/// Runs `cases` random checks for every differentiable layer.
pub fn suite(seed: u64, cases: usize) -> Result<Vec<LayerCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..cases {
        for kernel in [KernelSize::Three, KernelSize::One] {
            let s = random_shape(&mut rng, false);
            let c_out = rng.random_range(1..=3);
            let k = kernel.size();
            let w = random_tensor(&mut rng, Shape::new(c_out, s.c, k, k));
            let bias = (0..c_out).map(|_| rng.random_range(-0.5f32..0.5)).collect();
            let conv = Conv2d::new(kernel, w, bias)?;
            let input = random_tensor(&mut rng, s);
            let up = random_tensor(&mut rng, Shape::new(s.n, c_out, s.h, s.w));
            out.push(check_conv(&input, &conv, &up)?);
        }

        let s = random_shape(&mut rng, false);
        let input = away_from_zero(&mut rng, s);
        let up = random_tensor(&mut rng, s);
        out.push(check_relu(&input, &up)?);

        let s = random_shape(&mut rng, true);
        let input = distinct_values(&mut rng, s);
        let up = random_tensor(&mut rng, Shape::new(s.n, s.c, s.h / 2, s.w / 2));
        out.push(check_maxpool(&input, &up)?);

        let s = random_shape(&mut rng, false);
        let target = (s.h + rng.random_range(0..8), s.w + rng.random_range(1..8));
        let input = random_tensor(&mut rng, s);
        let up = random_tensor(&mut rng, Shape::new(s.n, s.c, target.0, target.1));
        out.push(check_upsample(&input, target, &up)?);

        let mut s = random_shape(&mut rng, false);
        s.c += 1;
        let input = random_tensor(&mut rng, s);
        let up = random_tensor(&mut rng, s);
        out.push(check_softmax(&input, &up)?);
        let first = rng.random_range(1..s.c);
        out.push(check_concat(&input, first, &up)?);

        let s = random_shape(&mut rng, false);
        let input = random_tensor(&mut rng, s);
        let up = random_tensor(&mut rng, Shape::new(s.n, s.c, 1, 1));
        out.push(check_global_avg_pool(&input, &up)?);

        let mut s = random_shape(&mut rng, false);
        s.c += 1;
        let logits = random_tensor(&mut rng, s);
        let positions = s.n * s.plane();
        let labels: Vec<usize> = (0..positions).map(|_| rng.random_range(0..s.c)).collect();
        let weights: Vec<f32> = (0..positions).map(|_| rng.random_range(0.1f32..1.0)).collect();
        out.push(check_cross_entropy(&logits, &labels, &weights)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_on_random_1x2x5x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let input = random_tensor(&mut rng, Shape::new(1, 2, 5, 5));
        let w = random_tensor(&mut rng, Shape::new(3, 2, 3, 3));
        let conv = Conv2d::new(KernelSize::Three, w, vec![0.1, -0.2, 0.3]).unwrap();
        let up = random_tensor(&mut rng, Shape::new(1, 3, 5, 5));
        let r = check_conv(&input, &conv, &up).unwrap();
        assert!(r.max_rel_error <= 1e-3, "{r:?}");
    }

    #[test]
    fn every_layer_passes_small_suite() {
        for r in suite(7, 3).unwrap() {
            assert!(r.max_rel_error <= 1e-3, "{r:?}");
        }
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0], &[1.1]) - 0.1 / 1.1).abs() < 1e-12);
    }
}
