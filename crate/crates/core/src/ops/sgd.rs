use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 1e-3,
        }
    }
}

/// One momentum-SGD update with weight decay folded into the gradient:
/// `v = momentum * v + (grad + wd * param)`, `param -= lr * v`.
pub fn sgd_step<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    velocity: &mut [T],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    debug_assert_eq!(param.len(), grad.len());
    debug_assert_eq!(param.len(), velocity.len());
    let (lr, mu, wd) = (T::of(lr), T::of(momentum), T::of(weight_decay));
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v + (g + wd * *p);
        *p -= lr * *v;
    }
}
