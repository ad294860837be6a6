use super::{LayerKind, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Spatial kernel size; 3x3 kernels use stride 1 with same padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelSize {
    One,
    Three,
}

impl KernelSize {
    pub fn size(self) -> usize {
        match self {
            KernelSize::One => 1,
            KernelSize::Three => 3,
        }
    }

    pub fn kind(self) -> LayerKind {
        match self {
            KernelSize::One => LayerKind::Conv1x1,
            KernelSize::Three => LayerKind::Conv3x3,
        }
    }
}

/// Convolution parameters: weight `(C_out, C_in, k, k)` and one bias per
/// output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T = f32> {
    kernel: KernelSize,
    weight: Tensor<T>,
    bias: Vec<T>,
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(kernel: KernelSize, weight: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        let s = weight.shape();
        let k = kernel.size();
        if s.h != k || s.w != k {
            return Err(Error::shape(
                "conv",
                format!("weight {s} does not hold {k}x{k} kernels"),
            ));
        }
        if bias.len() != s.n {
            return Err(Error::shape(
                "conv",
                format!("bias length {} for {} output channels", bias.len(), s.n),
            ));
        }
        Ok(Conv2d {
            kernel,
            weight,
            bias,
        })
    }

    pub fn zeros(kernel: KernelSize, c_in: usize, c_out: usize) -> Self {
        let k = kernel.size();
        Conv2d {
            kernel,
            weight: Tensor::zeros(Shape::new(c_out, c_in, k, k)),
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn kernel(&self) -> KernelSize {
        self.kernel
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape().c
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape().n
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [T] {
        self.weight.data_mut()
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn cast<U: Scalar>(&self) -> Conv2d<U> {
        Conv2d {
            kernel: self.kernel,
            weight: self.weight.cast(),
            bias: self.bias.iter().map(|b| U::narrow(b.widen())).collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }
}

/// Valid output range `[lo, hi)` along one axis for kernel offset `dk`
/// (`-1`, `0` or `1`) under same padding.
#[inline]
fn valid_range(len: usize, dk: isize) -> (usize, usize) {
    let lo = if dk < 0 { (-dk) as usize } else { 0 };
    let hi = if dk > 0 { len.saturating_sub(dk as usize) } else { len };
    (lo, hi.max(lo))
}

/// Same-padded, stride-1 convolution.
///
/// Accumulation order for each output element is fixed (bias, then input
/// channel, then kernel row and column), so the result for a pixel does not
/// depend on the spatial extent of the input.
pub fn conv_forward<T: Scalar>(input: &Tensor<T>, conv: &Conv2d<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.c != conv.c_in() {
        return Err(Error::shape(
            "conv_forward",
            format!("input has {} channels, kernel expects C_in={}", s.c, conv.c_in()),
        ));
    }
    let k = conv.kernel.size();
    let half = (k / 2) as isize;
    let c_out = conv.c_out();
    let out_shape = Shape::new(s.n, c_out, s.h, s.w);
    let mut out = Tensor::zeros(out_shape);
    let w = conv.weight.data();
    for n in 0..s.n {
        for co in 0..c_out {
            let out_plane = out.plane_mut(n, co);
            out_plane.fill(conv.bias[co]);
            for ci in 0..s.c {
                let in_plane = input.plane(n, ci);
                for ky in 0..k {
                    let dy = ky as isize - half;
                    let (y0, y1) = valid_range(s.h, dy);
                    for kx in 0..k {
                        let dx = kx as isize - half;
                        let (x0, x1) = valid_range(s.w, dx);
                        let wv = w[((co * s.c + ci) * k + ky) * k + kx];
                        if x0 >= x1 {
                            continue;
                        }
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let ix0 = (x0 as isize + dx) as usize;
                            let orow = &mut out_plane[y * s.w + x0..y * s.w + x1];
                            let irow = &in_plane[iy * s.w + ix0..iy * s.w + ix0 + (x1 - x0)];
                            for (o, &i) in orow.iter_mut().zip(irow) {
                                *o = *o + wv * i;
                            }
                        }
                    }
                }
            }
        }
    }
    out.ensure_finite("conv_forward")
}

/// Gradients of [`conv_forward`] given the upstream gradient of its output.
pub fn conv_backward<T: Scalar>(
    input: &Tensor<T>,
    conv: &Conv2d<T>,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let s = input.shape();
    if s.c != conv.c_in() {
        return Err(Error::shape(
            "conv_backward",
            format!("input has {} channels, kernel expects C_in={}", s.c, conv.c_in()),
        ));
    }
    let c_out = conv.c_out();
    let expect = Shape::new(s.n, c_out, s.h, s.w);
    if upstream.shape() != expect {
        return Err(Error::shape(
            "conv_backward",
            format!("upstream {} but forward output is {expect}", upstream.shape()),
        ));
    }
    let k = conv.kernel.size();
    let half = (k / 2) as isize;
    let w = conv.weight.data();
    let mut input_grad = Tensor::zeros(s);
    let mut weight_grad = vec![T::zero(); w.len()];
    let mut bias_grad = vec![T::zero(); c_out];

    for n in 0..s.n {
        for co in 0..c_out {
            let up = upstream.plane(n, co);
            bias_grad[co] = bias_grad[co] + up.iter().copied().sum::<T>();
            for ci in 0..s.c {
                let in_plane = input.plane(n, ci);
                for ky in 0..k {
                    let dy = ky as isize - half;
                    let (y0, y1) = valid_range(s.h, dy);
                    for kx in 0..k {
                        let dx = kx as isize - half;
                        let (x0, x1) = valid_range(s.w, dx);
                        if x0 >= x1 {
                            continue;
                        }
                        let widx = ((co * s.c + ci) * k + ky) * k + kx;
                        let mut acc = T::zero();
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let ix0 = (x0 as isize + dx) as usize;
                            let urow = &up[y * s.w + x0..y * s.w + x1];
                            let irow = &in_plane[iy * s.w + ix0..iy * s.w + ix0 + (x1 - x0)];
                            for (&u, &i) in urow.iter().zip(irow) {
                                acc = acc + u * i;
                            }
                        }
                        weight_grad[widx] = weight_grad[widx] + acc;
                    }
                }
            }
        }
        for ci in 0..s.c {
            let gplane = input_grad.plane_mut(n, ci);
            for co in 0..c_out {
                let up = upstream.plane(n, co);
                for ky in 0..k {
                    let dy = ky as isize - half;
                    let (y0, y1) = valid_range(s.h, dy);
                    for kx in 0..k {
                        let dx = kx as isize - half;
                        let (x0, x1) = valid_range(s.w, dx);
                        if x0 >= x1 {
                            continue;
                        }
                        let wv = w[((co * s.c + ci) * k + ky) * k + kx];
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let ix0 = (x0 as isize + dx) as usize;
                            let urow = &up[y * s.w + x0..y * s.w + x1];
                            let grow = &mut gplane[iy * s.w + ix0..iy * s.w + ix0 + (x1 - x0)];
                            for (g, &u) in grow.iter_mut().zip(urow) {
                                *g = *g + wv * u;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: input_grad.ensure_finite("conv_backward")?,
        weight: weight_grad,
        bias: bias_grad,
    })
}
