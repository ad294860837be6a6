use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
    out
}

/// Passes the upstream gradient where the forward input was positive.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != upstream.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("input {} vs upstream {}", input.shape(), upstream.shape()),
        ));
    }
    let mut g = upstream.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if !(x > T::zero()) {
            *gv = T::zero();
        }
    }
    Ok(g)
}

/// Softmax across the channel axis, independently per `(n, y, x)`.
pub fn softmax_channels<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let s = logits.shape();
    let p = s.plane();
    let mut out = Tensor::zeros(s);
    let src = logits.data();
    let dst = out.data_mut();
    let mut buf = vec![T::zero(); s.c];
    for n in 0..s.n {
        let base = n * s.c * p;
        for i in 0..p {
            let mut m = T::neg_infinity();
            for c in 0..s.c {
                buf[c] = src[base + c * p + i];
                m = m.max(buf[c]);
            }
            let mut sum = T::zero();
            for v in buf.iter_mut() {
                *v = (*v - m).exp();
                sum = sum + *v;
            }
            for c in 0..s.c {
                dst[base + c * p + i] = buf[c] / sum;
            }
        }
    }
    out.ensure_finite("softmax")
}

/// Gradient through softmax given its output `probs`.
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let s = probs.shape();
    if upstream.shape() != s {
        return Err(Error::shape(
            "softmax_backward",
            format!("probs {s} vs upstream {}", upstream.shape()),
        ));
    }
    let p = s.plane();
    let mut g = Tensor::zeros(s);
    let (pr, up) = (probs.data(), upstream.data());
    let gd = g.data_mut();
    for n in 0..s.n {
        let base = n * s.c * p;
        for i in 0..p {
            let mut dot = T::zero();
            for c in 0..s.c {
                let k = base + c * p + i;
                dot = dot + pr[k] * up[k];
            }
            for c in 0..s.c {
                let k = base + c * p + i;
                gd[k] = pr[k] * (up[k] - dot);
            }
        }
    }
    Ok(g)
}

/// Weighted mean cross-entropy over every `(n, y, x)` position of a
/// probability tensor, returned with its gradient with respect to the
/// pre-softmax logits.
///
/// `labels` and `weights` are indexed in `(n, y, x)` row-major order.
pub fn weighted_cross_entropy(
    probs: &Tensor<f32>,
    labels: &[usize],
    weights: &[f32],
) -> Result<(f64, Tensor<f32>)> {
    let s = probs.shape();
    let positions = s.n * s.plane();
    if labels.len() != positions || weights.len() != positions {
        return Err(Error::shape(
            "cross_entropy",
            format!(
                "{} labels / {} weights for {positions} positions",
                labels.len(),
                weights.len()
            ),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= s.c) {
        return Err(Error::invalid(
            "cross_entropy",
            format!("label {bad} with {} classes", s.c),
        ));
    }
    let total_w: f64 = weights.iter().map(|&w| w as f64).sum();
    if total_w <= 0.0 {
        return Err(Error::invalid("cross_entropy", "weights sum to zero"));
    }
    let p = s.plane();
    let mut grad = probs.clone();
    let mut loss = 0.0f64;
    for n in 0..s.n {
        for i in 0..p {
            let pos = n * p + i;
            let w = weights[pos] as f64 / total_w;
            let base = n * s.c * p + i;
            let py = probs.data()[base + labels[pos] * p] as f64;
            loss -= w * py.max(1e-12).ln();
            let gd = grad.data_mut();
            for c in 0..s.c {
                let k = base + c * p;
                let target = if c == labels[pos] { 1.0 } else { 0.0 };
                gd[k] = (w * (gd[k] as f64 - target)) as f32;
            }
        }
    }
    Ok((loss, grad))
}

/// Concatenates tensors along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat", "no inputs"))?
        .shape();
    let mut c_total = 0;
    for t in parts {
        let s = t.shape();
        if s.n != first.n || s.h != first.h || s.w != first.w {
            return Err(Error::shape(
                "concat",
                format!("{s} does not align with {first}"),
            ));
        }
        c_total += s.c;
    }
    let os = Shape::new(first.n, c_total, first.h, first.w);
    let mut out = Tensor::zeros(os);
    for n in 0..first.n {
        let mut c0 = 0;
        for t in parts {
            for c in 0..t.shape().c {
                out.plane_mut(n, c0 + c).copy_from_slice(t.plane(n, c));
            }
            c0 += t.shape().c;
        }
    }
    Ok(out)
}

/// Splits a channel-concatenated gradient back into its parts.
pub fn concat_backward<T: Scalar>(upstream: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = upstream.shape();
    if channels.iter().sum::<usize>() != s.c {
        return Err(Error::shape(
            "concat_backward",
            format!("parts {channels:?} do not sum to {} channels", s.c),
        ));
    }
    let mut out = Vec::with_capacity(channels.len());
    let mut c0 = 0;
    for &cc in channels {
        let mut t = Tensor::zeros(Shape::new(s.n, cc, s.h, s.w));
        for n in 0..s.n {
            for c in 0..cc {
                t.plane_mut(n, c).copy_from_slice(upstream.plane(n, c0 + c));
            }
        }
        c0 += cc;
        out.push(t);
    }
    Ok(out)
}

/// Spatial mean per channel: `(N, C, H, W) -> (N, C, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, 1));
    let inv = T::one() / T::narrow(s.plane() as f64);
    for n in 0..s.n {
        for c in 0..s.c {
            let sum: T = input.plane(n, c).iter().copied().sum();
            out.set(n, c, 0, 0, sum * inv);
        }
    }
    out
}

pub fn global_avg_pool_backward<T: Scalar>(input_shape: Shape, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let us = upstream.shape();
    if us != Shape::new(input_shape.n, input_shape.c, 1, 1) {
        return Err(Error::shape(
            "global_avg_pool_backward",
            format!("upstream {us} for input {input_shape}"),
        ));
    }
    let mut g = Tensor::zeros(input_shape);
    let inv = T::one() / T::narrow(input_shape.plane() as f64);
    for n in 0..us.n {
        for c in 0..us.c {
            let v = upstream.at(n, c, 0, 0) * inv;
            g.plane_mut(n, c).fill(v);
        }
    }
    Ok(g)
}
