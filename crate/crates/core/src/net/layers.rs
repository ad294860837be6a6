//! Small helpers shared by the convolutional models.

use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::tensor::container::Record;
use crate::tensor::{
    conv_backward, conv_forward, relu, relu_backward, Conv2d, KernelSize, ParamId, SgdState,
    Shape, Tensor,
};

/// Conv followed by ReLU; returns the activation (kept for the backward
/// pass, since the ReLU mask of the output equals that of the input).
pub(crate) fn conv_relu(input: &Tensor, conv: &Conv2d<f32>) -> Result<Tensor> {
    Ok(relu(&conv_forward(input, conv)?))
}

/// Backward through `relu(conv(input))` given the cached activation.
pub(crate) fn conv_relu_backward(
    input: &Tensor,
    activation: &Tensor,
    conv: &Conv2d<f32>,
    upstream: &Tensor,
    grads: &mut ParamGrads,
    index: usize,
) -> Result<Tensor> {
    let dz = relu_backward(activation, upstream)?;
    let g = conv_backward(input, conv, &dz)?;
    grads.add(index, &g.weight, &g.bias);
    Ok(g.input)
}

/// Accumulated gradients for a flat list of conv layers.
#[derive(Clone, Debug)]
pub(crate) struct ParamGrads {
    pub weight: Vec<Vec<f32>>,
    pub bias: Vec<Vec<f32>>,
}

impl ParamGrads {
    pub fn zeros(convs: &[Conv2d<f32>]) -> Self {
        ParamGrads {
            weight: convs.iter().map(|c| vec![0.0; c.weight().data().len()]).collect(),
            bias: convs.iter().map(|c| vec![0.0; c.bias().len()]).collect(),
        }
    }

    pub fn add(&mut self, index: usize, weight: &[f32], bias: &[f32]) {
        for (a, b) in self.weight[index].iter_mut().zip(weight) {
            *a += b;
        }
        for (a, b) in self.bias[index].iter_mut().zip(bias) {
            *a += b;
        }
    }

    pub fn merge(&mut self, other: &ParamGrads) {
        for i in 0..self.weight.len() {
            self.add(i, &other.weight[i], &other.bias[i]);
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for v in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// One momentum step on every layer.
    pub fn apply(&self, convs: &mut [Conv2d<f32>], sgd: &mut SgdState) -> Result<()> {
        for (i, conv) in convs.iter_mut().enumerate() {
            sgd.step(ParamId(2 * i), conv.weight_mut(), &self.weight[i])?;
            sgd.step(ParamId(2 * i + 1), conv.bias_mut(), &self.bias[i])?;
        }
        Ok(())
    }
}

/// `(1, 3, h, w)` tensor scaled to `[-1, 1]`.
pub(crate) fn image_tensor(img: &RasterImage) -> Tensor {
    let (w, h) = (img.width(), img.height());
    let mut t = Tensor::zeros(Shape::new(1, 3, h, w));
    let plane = w * h;
    let d = t.data_mut();
    for (i, px) in img.as_raw().chunks_exact(3).enumerate() {
        for c in 0..3 {
            d[c * plane + i] = px[c] as f32 / 127.5 - 1.0;
        }
    }
    t
}

pub(crate) fn conv_records(convs: &[Conv2d<f32>]) -> Vec<Record<f32>> {
    convs
        .iter()
        .map(|c| {
            let k = c.kernel().size() as u32;
            let mut data = c.weight().data().to_vec();
            data.extend_from_slice(c.bias());
            Record {
                tag: c.kernel().kind() as u32,
                shape: vec![c.c_out() as u32, c.c_in() as u32, k, k],
                data,
            }
        })
        .collect()
}

/// Rebuilds layers from records, checking them against the expected
/// `(kernel, c_in, c_out)` layout.
pub(crate) fn convs_from_records(
    records: &[Record<f32>],
    layout: &[(KernelSize, usize, usize)],
) -> Result<Vec<Conv2d<f32>>> {
    if records.len() != layout.len() {
        return Err(Error::Format(format!(
            "weights hold {} layers, configuration expects {}",
            records.len(),
            layout.len()
        )));
    }
    records
        .iter()
        .zip(layout)
        .enumerate()
        .map(|(i, (r, &(kernel, c_in, c_out)))| {
            let k = kernel.size() as u32;
            if r.tag != kernel.kind() as u32 || r.shape != [c_out as u32, c_in as u32, k, k] {
                return Err(Error::Format(format!(
                    "layer {i}: stored tag {} shape {:?}, expected {:?} ({c_out}, {c_in}, {k}, {k})",
                    r.tag,
                    r.shape,
                    kernel.kind()
                )));
            }
            let nw = c_out * c_in * (k * k) as usize;
            if r.data.len() != nw + c_out {
                return Err(Error::Format(format!("layer {i}: payload length {}", r.data.len())));
            }
            let weight = Tensor::from_vec(
                Shape::new(c_out, c_in, k as usize, k as usize),
                r.data[..nw].to_vec(),
            )?;
            Conv2d::new(kernel, weight, r.data[nw..].to_vec())
        })
        .collect()
}
