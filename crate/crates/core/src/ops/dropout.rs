use rand::Rng;

use crate::error::{config_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Zeroes whole (sample, channel) planes with probability `p` in training mode and
/// scales survivors by `1 / (1 - p)`. Returns the per-plane multiplier for the
/// backward pass. Eval mode is the identity.
pub fn channel_dropout<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    p: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(config_err(format!("dropout rate {p} outside [0, 1)")));
    }
    let s = x.shape();
    let planes = s.n * s.c;
    if !training || p == 0.0 {
        return Ok((x.clone(), vec![T::one(); planes]));
    }
    let keep = T::one() / T::of(1.0 - p);
    let mask: Vec<T> = (0..planes)
        .map(|_| {
            if rng.gen::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    Ok((apply_mask(x, &mask), mask))
}

pub fn channel_dropout_backward<T: Scalar>(grad_out: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    apply_mask(grad_out, mask)
}

fn apply_mask<T: Scalar>(x: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let plane = x.shape().plane();
    let mut y = x.clone();
    y.clear_grad();
    for (chunk, &m) in y.data_mut().chunks_mut(plane).zip(mask) {
        chunk.iter_mut().for_each(|v| *v *= m);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f32>::from_fn(Shape::new(2, 3, 2, 2), |i| i as f32);
        assert_eq!(channel_dropout(&x, 0.0, &mut rng, true).unwrap().0, x);
        assert_eq!(channel_dropout(&x, 0.7, &mut rng, false).unwrap().0, x);
        assert!(channel_dropout(&x, 1.0, &mut rng, true).is_err());
    }

    #[test]
    fn monte_carlo_rate_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::<f64>::full(Shape::new(4, 5000, 1, 2), 1.0);
        let (y, mask) = channel_dropout(&x, 0.5, &mut rng, true).unwrap();
        let zeroed = mask.iter().filter(|&&m| m == 0.0).count() as f64 / mask.len() as f64;
        assert!((zeroed - 0.5).abs() < 0.05, "{zeroed}");
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        // whole planes are dropped together
        for plane in y.data().chunks(2) {
            assert_eq!(plane[0], plane[1]);
        }
    }
}
