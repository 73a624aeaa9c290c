//! Batch normalization and SubSpectral Normalization.
//!
//! SubSpectral Normalization splits the frequency axis into `S` equal sub-bands and
//! normalizes every (channel, sub-band) pair as its own BN group. Statistics and affine
//! parameters are indexed `channel * S + band`. Plain BN is the `S = 1` case.

use rayon::prelude::*;

use crate::error::{config_err, Result};
use crate::tensor::{Scalar, Shape, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    channels: usize,
    sub_bands: usize,
}

impl<T: Scalar> NormParams<T> {
    /// BN over `channels`, gamma = 1, beta = 0, running stats (0, 1).
    pub fn batch_norm(channels: usize) -> Self {
        Self::subspectral(channels, 1)
    }

    pub fn subspectral(channels: usize, sub_bands: usize) -> Self {
        let shape = Shape::new(1, channels * sub_bands, 1, 1);
        Self {
            gamma: Tensor::full(shape, T::one()),
            beta: Tensor::zeros(shape),
            running_mean: Tensor::zeros(shape),
            running_var: Tensor::full(shape, T::one()),
            eps: DEFAULT_EPS,
            momentum: DEFAULT_MOMENTUM,
            channels,
            sub_bands,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn sub_bands(&self) -> usize {
        self.sub_bands
    }

    /// Number of normalization groups (`channels * sub_bands`).
    pub fn groups(&self) -> usize {
        self.channels * self.sub_bands
    }

    /// Folds the batch statistics of a training-mode pass into the running estimates.
    /// Running variance uses the unbiased batch variance.
    pub fn update_running(&mut self, cache: &NormCache<T>) {
        let Some(stats) = cache.batch.as_ref() else {
            return;
        };
        let m = T::of(self.momentum);
        let keep = T::one() - m;
        let count = cache.count as f64;
        let unbias = T::of(if cache.count > 1 {
            count / (count - 1.0)
        } else {
            1.0
        });
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &v) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = keep * *r + m * v * unbias;
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance of the batch.
    pub var: Vec<T>,
}

/// What the backward pass and the running-stat update need from a forward pass.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Present in training mode.
    pub batch: Option<BatchStats<T>>,
    /// Elements per normalization group.
    pub count: usize,
    pub sub_bands: usize,
}

/// Iterates the flat indices of group (channel `c`, band `b`) in (n, h, w) order.
fn for_each_in_group(s: Shape, c: usize, band: (usize, usize), mut f: impl FnMut(usize)) {
    for n in 0..s.n {
        let start = s.index(n, c, band.0, 0);
        for i in start..start + (band.1 - band.0) * s.w {
            f(i);
        }
    }
}

fn check<T: Scalar>(x: &Tensor<T>, p: &NormParams<T>) -> Result<usize> {
    let s = x.shape();
    if s.c != p.channels {
        return Err(config_err(format!(
            "norm over {} channels applied to input {s}",
            p.channels
        )));
    }
    if p.sub_bands == 0 || s.h % p.sub_bands != 0 {
        return Err(config_err(format!(
            "frequency height {} not divisible into {} sub-bands",
            s.h, p.sub_bands
        )));
    }
    Ok(s.h / p.sub_bands)
}

/// Normalizes per group with batch statistics (training) or running statistics (eval),
/// then applies the affine transform.
pub fn normalize<T: Scalar>(
    x: &Tensor<T>,
    p: &NormParams<T>,
    training: bool,
) -> Result<(Tensor<T>, NormCache<T>)> {
    let band_h = check(x, p)?;
    let s = x.shape();
    let sb = p.sub_bands;
    let count = s.n * band_h * s.w;
    let xd = x.data();
    let eps = T::of(p.eps);

    let stats: Vec<(T, T)> = (0..p.groups())
        .into_par_iter()
        .map(|g| {
            if !training {
                return (p.running_mean.data()[g], p.running_var.data()[g]);
            }
            let (c, b) = (g / sb, g % sb);
            let band = (b * band_h, (b + 1) * band_h);
            let mut sum = T::zero();
            for_each_in_group(s, c, band, |i| sum += xd[i]);
            let mean = sum / T::of(count as f64);
            let mut sq = T::zero();
            for_each_in_group(s, c, band, |i| {
                let d = xd[i] - mean;
                sq += d * d;
            });
            (mean, sq / T::of(count as f64))
        })
        .collect();

    let inv_std: Vec<T> = stats
        .iter()
        .map(|&(_, v)| T::one() / (v + eps).sqrt())
        .collect();
    let mut xhat = vec![T::zero(); s.numel()];
    let mut y = vec![T::zero(); s.numel()];
    let gamma = p.gamma.data();
    let beta = p.beta.data();
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h {
                let g = c * sb + h / band_h;
                let (mean, _) = stats[g];
                let start = s.index(n, c, h, 0);
                for i in start..start + s.w {
                    let v = (xd[i] - mean) * inv_std[g];
                    xhat[i] = v;
                    y[i] = gamma[g] * v + beta[g];
                }
            }
        }
    }

    let batch = training.then(|| BatchStats {
        mean: stats.iter().map(|s| s.0).collect(),
        var: stats.iter().map(|s| s.1).collect(),
    });
    Ok((
        Tensor::from_vec(s, y)?,
        NormCache {
            xhat: Tensor::from_vec(s, xhat)?,
            inv_std,
            batch,
            count,
            sub_bands: sb,
        },
    ))
}

/// BN: per-channel normalization over (n, h, w).
pub fn batch_norm<T: Scalar>(
    x: &Tensor<T>,
    p: &NormParams<T>,
    training: bool,
) -> Result<(Tensor<T>, NormCache<T>)> {
    if p.sub_bands != 1 {
        return Err(config_err("batch_norm expects single-band parameters"));
    }
    normalize(x, p, training)
}

/// SSN with the sub-band count stored in `p`.
pub fn subspectral_norm<T: Scalar>(
    x: &Tensor<T>,
    p: &NormParams<T>,
    training: bool,
) -> Result<(Tensor<T>, NormCache<T>)> {
    normalize(x, p, training)
}

/// Forward pass that also folds batch statistics into `p` in training mode.
pub fn normalize_step<T: Scalar>(
    x: &Tensor<T>,
    p: &mut NormParams<T>,
    training: bool,
) -> Result<Tensor<T>> {
    let (y, cache) = normalize(x, p, training)?;
    p.update_running(&cache);
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct NormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub fn normalize_backward<T: Scalar>(
    cache: &NormCache<T>,
    p: &NormParams<T>,
    grad_out: &Tensor<T>,
) -> Result<NormGrads<T>> {
    let s = cache.xhat.shape();
    grad_out.expect_shape(s)?;
    let sb = cache.sub_bands;
    let band_h = s.h / sb;
    let gd = grad_out.data();
    let xh = cache.xhat.data();
    let gamma = p.gamma.data();

    let sums: Vec<(T, T)> = (0..p.groups())
        .into_par_iter()
        .map(|g| {
            let (c, b) = (g / sb, g % sb);
            let mut sg = T::zero();
            let mut sgx = T::zero();
            for_each_in_group(s, c, (b * band_h, (b + 1) * band_h), |i| {
                sg += gd[i];
                sgx += gd[i] * xh[i];
            });
            (sg, sgx)
        })
        .collect();

    let count = T::of(cache.count as f64);
    let mut gx = vec![T::zero(); s.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h {
                let g = c * sb + h / band_h;
                let scale = gamma[g] * cache.inv_std[g];
                let start = s.index(n, c, h, 0);
                for i in start..start + s.w {
                    gx[i] = if cache.batch.is_some() {
                        scale * (gd[i] - sums[g].0 / count - xh[i] * sums[g].1 / count)
                    } else {
                        scale * gd[i]
                    };
                }
            }
        }
    }
    Ok(NormGrads {
        input: Tensor::from_vec(s, gx)?,
        gamma: sums.iter().map(|s| s.1).collect(),
        beta: sums.iter().map(|s| s.0).collect(),
    })
}
