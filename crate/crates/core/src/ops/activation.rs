use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `x * sigmoid(x)`.
pub fn swish<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid_scalar(v))
}

/// d/dx swish = s + x s (1 - s).
pub fn swish_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(grad_out, |v, g| {
        let s = sigmoid_scalar(v);
        g * (s + v * s * (T::one() - s))
    })
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Subgradient 0 at the kink.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Takes the forward *output* `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad_out, |s, g| g * s * (T::one() - s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![v]).unwrap()
    }

    #[test]
    fn swish_values() {
        assert_eq!(swish(&scalar(0.0)).data()[0], 0.0);
        assert!((swish(&scalar(1.0)).data()[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((swish(&scalar(-1.0)).data()[0] + 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn relu_values() {
        assert_eq!(relu(&scalar(-2.0)).data()[0], 0.0);
        assert_eq!(relu(&scalar(3.5)).data()[0], 3.5);
    }

    #[test]
    fn sigmoid_stays_in_open_interval() {
        for v in [-30.0, -1.0, 0.0, 2.0, 30.0] {
            let s = sigmoid(&scalar(v)).data()[0];
            assert!(s > 0.0 && s < 1.0);
        }
    }
}
