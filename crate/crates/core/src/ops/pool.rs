//! Frequency reductions, frequency broadcast and time averaging.

use crate::error::{config_err, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Mean over the frequency axis: (n, c, h, w) -> (n, c, 1, w).
pub fn avg_pool_freq<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let out = Shape::new(s.n, s.c, 1, s.w);
    let scale = T::one() / T::of(s.h as f64);
    let mut y = vec![T::zero(); out.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            let row = &mut y[out.index(n, c, 0, 0)..][..s.w];
            for h in 0..s.h {
                let src = &x.data()[s.index(n, c, h, 0)..][..s.w];
                row.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
            }
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Tensor::from_vec(out, y).expect("shape computed above")
}

pub fn avg_pool_freq_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_h: usize,
) -> Result<Tensor<T>> {
    let scale = T::one() / T::of(input_h as f64);
    Ok(broadcast_freq(grad_out, input_h)?.map(|g| g * scale))
}

/// Max over the frequency axis. Returns the output and the winning row per output
/// element (first maximum wins ties).
pub fn max_pool_freq<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let s = x.shape();
    let out = Shape::new(s.n, s.c, 1, s.w);
    let mut y = vec![T::neg_infinity(); out.numel()];
    let mut arg = vec![0usize; out.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            let base = out.index(n, c, 0, 0);
            for h in 0..s.h {
                for w in 0..s.w {
                    let v = x.at(n, c, h, w);
                    if v > y[base + w] {
                        y[base + w] = v;
                        arg[base + w] = h;
                    }
                }
            }
        }
    }
    (Tensor::from_vec(out, y).expect("shape computed above"), arg)
}

pub fn max_pool_freq_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_h: usize,
) -> Tensor<T> {
    let o = grad_out.shape();
    let s = Shape::new(o.n, o.c, input_h, o.w);
    let mut g = Tensor::zeros(s);
    for n in 0..o.n {
        for c in 0..o.c {
            for w in 0..o.w {
                let i = o.index(n, c, 0, w);
                g.data_mut()[s.index(n, c, argmax[i], w)] = grad_out.data()[i];
            }
        }
    }
    g
}

/// Copies the single frequency row of `x` into `target_h` rows.
pub fn broadcast_freq<T: Scalar>(x: &Tensor<T>, target_h: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.h != 1 {
        return Err(config_err(format!(
            "broadcast_freq needs height 1, got {s}"
        )));
    }
    let out = Shape::new(s.n, s.c, target_h, s.w);
    let mut y = Vec::with_capacity(out.numel());
    for n in 0..s.n {
        for c in 0..s.c {
            let row = &x.data()[s.index(n, c, 0, 0)..][..s.w];
            for _ in 0..target_h {
                y.extend_from_slice(row);
            }
        }
    }
    Tensor::from_vec(out, y)
}

/// Gradient of [`broadcast_freq`]: sum over the copies.
pub fn broadcast_freq_backward<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
    let s = grad_out.shape();
    let out = Shape::new(s.n, s.c, 1, s.w);
    let mut y = vec![T::zero(); out.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            let row = &mut y[out.index(n, c, 0, 0)..][..s.w];
            for h in 0..s.h {
                let src = &grad_out.data()[s.index(n, c, h, 0)..][..s.w];
                row.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
            }
        }
    }
    Tensor::from_vec(out, y).expect("shape computed above")
}

/// Mean over the time axis: (n, c, h, w) -> (n, c, h, 1).
pub fn avg_pool_time<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let scale = T::one() / T::of(s.w as f64);
    let data = x
        .data()
        .chunks(s.w)
        .map(|row| row.iter().copied().sum::<T>() * scale)
        .collect();
    Tensor::from_vec(Shape::new(s.n, s.c, s.h, 1), data).expect("one value per row")
}

pub fn avg_pool_time_backward<T: Scalar>(grad_out: &Tensor<T>, input_w: usize) -> Tensor<T> {
    let s = grad_out.shape();
    let scale = T::one() / T::of(input_w as f64);
    let data = grad_out
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g * scale, input_w))
        .collect();
    Tensor::from_vec(Shape::new(s.n, s.c, s.h, input_w), data).expect("one row per value")
}
