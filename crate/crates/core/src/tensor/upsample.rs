use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Per output coordinate: lower source index, upper source index, fraction.
fn axis_taps<T: Scalar>(src: usize, dst: usize) -> Vec<(usize, usize, T)> {
    (0..dst)
        .map(|i| {
            if dst == 1 || src == 1 {
                return (0, 0, T::zero());
            }
            // align-corners: output ends map onto input ends
            let pos = (i * (src - 1)) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, T::narrow(pos - lo as f64))
        })
        .collect()
}

/// Bilinear upsampling with align-corners geometry.
pub fn upsample_bilinear<T: Scalar>(input: &Tensor<T>, target: (usize, usize)) -> Result<Tensor<T>> {
    let s = input.shape();
    let (th, tw) = target;
    if th < s.h || tw < s.w {
        return Err(Error::invalid(
            "upsample_bilinear",
            format!("target {th}x{tw} smaller than input {}x{}", s.h, s.w),
        ));
    }
    if th == s.h && tw == s.w {
        return Ok(input.clone());
    }
    let ys = axis_taps::<T>(s.h, th);
    let xs = axis_taps::<T>(s.w, tw);
    let os = Shape::new(s.n, s.c, th, tw);
    let mut out = Tensor::zeros(os);
    let one = T::one();
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                let r0 = &src[y0 * s.w..(y0 + 1) * s.w];
                let r1 = &src[y1 * s.w..(y1 + 1) * s.w];
                let orow = &mut dst[oy * tw..(oy + 1) * tw];
                for (o, &(x0, x1, fx)) in orow.iter_mut().zip(&xs) {
                    let top = r0[x0] * (one - fx) + r0[x1] * fx;
                    let bot = r1[x0] * (one - fx) + r1[x1] * fx;
                    *o = top * (one - fy) + bot * fy;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample_bilinear`]: scatters upstream values back onto the
/// source grid with the same interpolation weights.
pub fn upsample_bilinear_backward<T: Scalar>(
    input_shape: Shape,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let us = upstream.shape();
    if us.n != input_shape.n || us.c != input_shape.c || us.h < input_shape.h || us.w < input_shape.w {
        return Err(Error::shape(
            "upsample_bilinear_backward",
            format!("upstream {us} for input {input_shape}"),
        ));
    }
    if us.h == input_shape.h && us.w == input_shape.w {
        return Ok(upstream.clone());
    }
    let ys = axis_taps::<T>(input_shape.h, us.h);
    let xs = axis_taps::<T>(input_shape.w, us.w);
    let mut g = Tensor::zeros(input_shape);
    let one = T::one();
    let iw = input_shape.w;
    for n in 0..us.n {
        for c in 0..us.c {
            let up = upstream.plane(n, c);
            let dst = g.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let u = up[oy * us.w + ox];
                    if u == T::zero() {
                        continue;
                    }
                    let top = u * (one - fy);
                    let bot = u * fy;
                    dst[y0 * iw + x0] = dst[y0 * iw + x0] + top * (one - fx);
                    dst[y0 * iw + x1] = dst[y0 * iw + x1] + top * fx;
                    dst[y1 * iw + x0] = dst[y1 * iw + x0] + bot * (one - fx);
                    dst[y1 * iw + x1] = dst[y1 * iw + x1] + bot * fx;
                }
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_preserved() {
        let t = Tensor::full(Shape::new(1, 1, 4, 4), 5.0f32);
        let o = upsample_bilinear(&t, (64, 64)).unwrap();
        let dev = o.data().iter().map(|&v| (v - 5.0).abs()).fold(0.0, f32::max);
        assert!(dev <= 1e-6, "{dev}");
    }

    #[test]
    fn corner_anchored_center() {
        let t = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0f32, 1.0, 2.0, 3.0]).unwrap();
        let o = upsample_bilinear(&t, (3, 3)).unwrap();
        assert_eq!(o.at(0, 0, 1, 1), 1.5);
        assert_eq!(o.at(0, 0, 0, 0), 0.0);
        assert_eq!(o.at(0, 0, 2, 2), 3.0);
    }

    #[test]
    fn identity_is_bitwise() {
        let data = vec![-0.0f32, 1.25, f32::MIN_POSITIVE, 7.0];
        let t = Tensor::from_vec(Shape::new(1, 1, 2, 2), data).unwrap();
        let o = upsample_bilinear(&t, (2, 2)).unwrap();
        let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = o.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn ramp_exact_at_sample_points() {
        let t = Tensor::from_vec(Shape::new(1, 1, 1, 5), vec![0.0f64, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let o = upsample_bilinear(&t, (1, 9)).unwrap();
        for x in 0..9 {
            assert_eq!(o.at(0, 0, 0, x), x as f64 * 0.5);
        }
    }

    #[test]
    fn shrinking_target_rejected() {
        let t = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 4));
        assert!(upsample_bilinear(&t, (2, 8)).is_err());
    }

    #[test]
    fn backward_is_adjoint() {
        // <up(x), g> == <x, up^T(g)>
        let s = Shape::new(1, 2, 3, 4);
        let x: Vec<f64> = (0..s.len()).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let xt = Tensor::from_vec(s, x.clone()).unwrap();
        let y = upsample_bilinear(&xt, (7, 9)).unwrap();
        let g: Vec<f64> = (0..y.data().len()).map(|i| ((i * 5 % 13) as f64) * 0.1).collect();
        let gt = Tensor::from_vec(y.shape(), g.clone()).unwrap();
        let back = upsample_bilinear_backward(s, &gt).unwrap();
        let lhs: f64 = y.data().iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(back.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
