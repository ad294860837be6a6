use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Flat input index of the winning element of every output cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Shape,
    argmax: Vec<u32>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn argmax(&self) -> &[u32] {
        &self.argmax
    }
}

/// 2x2 max pooling with stride 2. Odd spatial dimensions are rejected; ties
/// go to the first element in row-major window order.
pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let s = input.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(
            "maxpool2x2",
            format!("spatial dims {}x{} must both be even", s.h, s.w),
        ));
    }
    let os = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Tensor::zeros(os);
    let mut argmax = Vec::with_capacity(os.len());
    let data = input.data();
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..os.h {
                for ox in 0..os.w {
                    let mut best_i = s.index(n, c, 2 * oy, 2 * ox);
                    let mut best = data[best_i];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = s.index(n, c, 2 * oy + dy, 2 * ox + dx);
                        if data[i] > best {
                            best = data[i];
                            best_i = i;
                        }
                    }
                    out.set(n, c, oy, ox, best);
                    argmax.push(best_i as u32);
                }
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: s,
            argmax,
        },
    ))
}

/// Routes each upstream element to the input position that won the forward max.
pub fn maxpool2x2_backward<T: Scalar>(
    indices: &PoolIndices,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    if upstream.data().len() != indices.argmax.len() {
        return Err(Error::shape(
            "maxpool2x2_backward",
            format!(
                "upstream {} for {} pooled cells",
                upstream.shape(),
                indices.argmax.len()
            ),
        ));
    }
    let mut g = Tensor::zeros(indices.input_shape);
    let gd = g.data_mut();
    for (&i, &u) in indices.argmax.iter().zip(upstream.data()) {
        gd[i as usize] = gd[i as usize] + u;
    }
    Ok(g)
}
