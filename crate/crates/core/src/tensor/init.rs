use super::{Conv2d, KernelSize, Shape, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// He-normal initialised convolution with zero bias.
pub fn he_normal<R: Rng + ?Sized>(rng: &mut R, kernel: KernelSize, c_in: usize, c_out: usize) -> Conv2d<f32> {
    let k = kernel.size();
    let fan_in = (c_in * k * k).max(1) as f64;
    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
    let shape = Shape::new(c_out, c_in, k, k);
    let data: Vec<f32> = (0..shape.len()).map(|_| normal.sample(rng) as f32).collect();
    Conv2d::new(kernel, Tensor::from_vec(shape, data).expect("sized"), vec![0.0; c_out])
        .expect("consistent shapes")
}
