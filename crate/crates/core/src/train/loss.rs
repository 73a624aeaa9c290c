use crate::error::{config_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean softmax cross-entropy over the batch, and its gradient with respect to the
/// (n, classes, 1, 1) logits. Accumulates in f64.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let s = logits.shape();
    let k = s.c * s.h * s.w;
    if s.n != labels.len() {
        return Err(config_err(format!(
            "{} labels for {} logit rows",
            labels.len(),
            s.n
        )));
    }
    let mut grad = Vec::with_capacity(logits.len());
    let mut loss = 0.0;
    let n = s.n as f64;
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        if label >= k {
            return Err(config_err(format!("label {label} outside {k} classes")));
        }
        let row: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + z.ln();
        loss += log_z - row[label];
        for (j, v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            let t = if j == label { 1.0 } else { 0.0 };
            grad.push(T::of((p - t) / n));
        }
    }
    Ok((loss / n, Tensor::from_vec(s, grad)?))
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
