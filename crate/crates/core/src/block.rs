//! BC-ResBlock: broadcasted residual learning with an auxiliary 2-D residual.
//!
//! With `f2` the frequency-depthwise conv + SubSpectral Norm and `f1` the temporal
//! depthwise conv + BN + swish + pointwise conv + channel dropout, a normal block computes
//!
//! ```text
//! y = x + f2(x) + BC(f1(pool_freq(f2(x))))
//! ```
//!
//! where `BC` copies the single-row temporal feature back over every frequency row.
//! A transition block first maps `x` through pointwise conv + BN + ReLU and drops the
//! identity term. `f2(x)` is computed once and feeds both the pooled branch and the sum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::nn::{join, Conv2d, Ctx, Module, TensorRole};
use crate::ops::{self, ConvSpec, NormCache, NormParams};
use crate::tensor::{Scalar, Tensor};

/// Frequency reduction applied before the temporal branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceMode {
    #[default]
    Avg,
    Max,
}

/// How the temporal residual rejoins the 2-D path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// `+ BC(r)`
    #[default]
    BroadcastAdd,
    /// `f2(x) * BC(sigmoid(r))` in place of `f2(x) + BC(r)`.
    SigmoidAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// (frequency, time) stride; time stride must be 1.
    pub stride: (usize, usize),
    pub temporal_dilation: usize,
    pub ssn_sub_bands: usize,
    pub dropout_p: f64,
    pub reduce_mode: ReduceMode,
    pub combine_mode: CombineMode,
    pub is_transition: bool,
}

impl BlockConfig {
    /// Default variant: SSN with 5 sub-bands, dropout 0.1, average pooling, broadcast add.
    /// `is_transition` is derived from the channel counts and stride.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        freq_stride: usize,
        dilation: usize,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            stride: (freq_stride, 1),
            temporal_dilation: dilation,
            ssn_sub_bands: 5,
            dropout_p: 0.1,
            reduce_mode: ReduceMode::Avg,
            combine_mode: CombineMode::BroadcastAdd,
            is_transition: in_channels != out_channels || freq_stride != 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(config_err("block channel counts must be positive"));
        }
        if self.stride.0 == 0 || self.stride.1 != 1 {
            return Err(config_err(format!(
                "block stride {:?}: frequency stride must be positive and time stride 1",
                self.stride
            )));
        }
        if self.temporal_dilation == 0 || self.ssn_sub_bands == 0 {
            return Err(config_err("dilation and sub-band count must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(config_err(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_p
            )));
        }
        let needs_transition = self.in_channels != self.out_channels || self.stride != (1, 1);
        if needs_transition != self.is_transition {
            return Err(config_err(format!(
                "is_transition={} inconsistent with {}->{} channels, stride {:?}",
                self.is_transition, self.in_channels, self.out_channels, self.stride
            )));
        }
        Ok(())
    }

    /// Frequency height after the f2 stride, checked against the sub-band count.
    pub fn output_height(&self, input_h: usize) -> Result<usize> {
        let h = (input_h + 2 - 3) / self.stride.0 + 1;
        if h % self.ssn_sub_bands != 0 {
            return Err(config_err(format!(
                "frequency height {h} after stride not divisible into {} sub-bands",
                self.ssn_sub_bands
            )));
        }
        Ok(h)
    }

    pub(crate) fn front_spec(&self) -> ConvSpec {
        ConvSpec::pointwise()
    }

    pub(crate) fn f2_spec(&self) -> ConvSpec {
        ConvSpec::depthwise((3, 1), self.out_channels)
            .with_stride((self.stride.0, 1))
            .with_padding((1, 0))
    }

    pub(crate) fn f1_depthwise_spec(&self) -> ConvSpec {
        let d = self.temporal_dilation;
        ConvSpec::depthwise((1, 3), self.out_channels)
            .with_dilation((1, d))
            .with_padding((0, d))
    }
}

/// Front pointwise conv + BN of a transition block (ReLU follows).
#[derive(Debug, Clone, PartialEq)]
pub struct Front<T> {
    pub conv: Conv2d<T>,
    pub bn: NormParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T = f32> {
    pub cfg: BlockConfig,
    pub front: Option<Front<T>>,
    pub f2_conv: Conv2d<T>,
    pub f2_ssn: NormParams<T>,
    pub f1_conv: Conv2d<T>,
    pub f1_bn: NormParams<T>,
    pub f1_pointwise: Conv2d<T>,
}

#[derive(Debug, Clone)]
pub struct FrontTrace<T> {
    pub input: Tensor<T>,
    pub bn: NormCache<T>,
    pub pre_relu: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct F2Trace<T> {
    pub input: Tensor<T>,
    pub ssn: NormCache<T>,
}

#[derive(Debug, Clone)]
pub struct F1Trace<T> {
    pub input: Tensor<T>,
    pub bn: NormCache<T>,
    pub pre_swish: Tensor<T>,
    pub swished: Tensor<T>,
    pub mask: Vec<T>,
}

/// Everything the backward pass of one block needs.
#[derive(Debug, Clone)]
pub struct BlockTrace<T> {
    pub front: Option<FrontTrace<T>>,
    pub f2: F2Trace<T>,
    pub f2_out: Tensor<T>,
    pub pool_argmax: Option<Vec<usize>>,
    pub f1: F1Trace<T>,
    /// `f1` output, height 1.
    pub residual: Tensor<T>,
    /// `sigmoid(residual)` for the attention variant.
    pub attention: Option<Tensor<T>>,
}

impl<T: Scalar> BlockTrace<T> {
    /// Sign pattern of every ReLU input plus the max-pool winners. Two traces with the
    /// same pattern lie on the same smooth piece of the block function.
    pub fn kink_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some(f) = &self.front {
            out.extend(
                f.pre_relu
                    .data()
                    .iter()
                    .map(|&v| usize::from(v > T::zero())),
            );
        }
        if let Some(a) = &self.pool_argmax {
            out.extend_from_slice(a);
        }
        out
    }
}

impl<T: Scalar> BlockParams<T> {
    pub fn new<R: Rng + ?Sized>(cfg: BlockConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.out_channels;
        let front = if cfg.is_transition {
            Some(Front {
                conv: Conv2d::new(cfg.in_channels, c, cfg.front_spec(), rng)?,
                bn: NormParams::batch_norm(c),
            })
        } else {
            None
        };
        Ok(Self {
            cfg,
            front,
            f2_conv: Conv2d::new(c, c, cfg.f2_spec(), rng)?,
            f2_ssn: NormParams::subspectral(c, cfg.ssn_sub_bands),
            f1_conv: Conv2d::new(c, c, cfg.f1_depthwise_spec(), rng)?,
            f1_bn: NormParams::batch_norm(c),
            f1_pointwise: Conv2d::new(c, c, ConvSpec::pointwise(), rng)?,
        })
    }

    /// Zero conv weights and zero norm affines everywhere.
    pub fn zeroed(cfg: BlockConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.out_channels;
        let mut bn = NormParams::batch_norm(c);
        bn.zero_affine();
        let mut ssn = NormParams::subspectral(c, cfg.ssn_sub_bands);
        ssn.zero_affine();
        Ok(Self {
            cfg,
            front: cfg
                .is_transition
                .then(|| -> Result<_> {
                    Ok(Front {
                        conv: Conv2d::zeros(cfg.in_channels, c, cfg.front_spec())?,
                        bn: bn.clone(),
                    })
                })
                .transpose()?,
            f2_conv: Conv2d::zeros(c, c, cfg.f2_spec())?,
            f2_ssn: ssn,
            f1_conv: Conv2d::zeros(c, c, cfg.f1_depthwise_spec())?,
            f1_bn: bn,
            f1_pointwise: Conv2d::zeros(c, c, ConvSpec::pointwise())?,
        })
    }

    /// Frequency-depthwise 3x1 conv (carrying the frequency stride) followed by SSN.
    pub fn f2_forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<(Tensor<T>, F2Trace<T>)> {
        if x.shape().c != self.cfg.out_channels {
            return Err(config_err(format!(
                "f2 expects {} channels, got {}",
                self.cfg.out_channels,
                x.shape()
            )));
        }
        self.cfg.output_height(x.shape().h)?;
        let conv = self.f2_conv.forward(x, &mut ctx.meter)?;
        let (y, ssn) = self.f2_ssn.forward(&conv, ctx.training, &mut ctx.meter)?;
        Ok((
            y,
            F2Trace {
                input: x.clone(),
                ssn,
            },
        ))
    }

    /// Dilated temporal depthwise conv, BN, swish, pointwise conv, channel dropout.
    pub fn f1_forward(&self, t: &Tensor<T>, ctx: &mut Ctx) -> Result<(Tensor<T>, F1Trace<T>)> {
        if t.shape().h != 1 {
            return Err(config_err(format!(
                "f1 expects height 1, got {}",
                t.shape()
            )));
        }
        let d = self.f1_conv.forward(t, &mut ctx.meter)?;
        let (e, bn) = self.f1_bn.forward(&d, ctx.training, &mut ctx.meter)?;
        let s = ops::swish(&e);
        let g = self.f1_pointwise.forward(&s, &mut ctx.meter)?;
        let (r, mask) = ops::channel_dropout(&g, self.cfg.dropout_p, &mut ctx.rng, ctx.training)?;
        Ok((
            r,
            F1Trace {
                input: t.clone(),
                bn,
                pre_swish: e,
                swished: s,
                mask,
            },
        ))
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<(Tensor<T>, BlockTrace<T>)> {
        let xs = x.shape();
        if xs.c != self.cfg.in_channels {
            return Err(config_err(format!(
                "block expects {} input channels, got {xs}",
                self.cfg.in_channels
            )));
        }

        let (x1, front) = match &self.front {
            Some(front) => {
                let a = front.conv.forward(x, &mut ctx.meter)?;
                let (b, bn) = front.bn.forward(&a, ctx.training, &mut ctx.meter)?;
                let x1 = ops::relu(&b);
                (
                    x1,
                    Some(FrontTrace {
                        input: x.clone(),
                        bn,
                        pre_relu: b,
                    }),
                )
            }
            None => (x.clone(), None),
        };

        let (f2_out, f2) = self.f2_forward(&x1, ctx)?;
        let (pooled, pool_argmax) = match self.cfg.reduce_mode {
            ReduceMode::Avg => (ops::avg_pool_freq(&f2_out), None),
            ReduceMode::Max => {
                let (p, arg) = ops::max_pool_freq(&f2_out);
                (p, Some(arg))
            }
        };
        let (residual, f1) = self.f1_forward(&pooled, ctx)?;
        let h = f2_out.shape().h;

        let (y, attention) = match self.cfg.combine_mode {
            CombineMode::BroadcastAdd => {
                let bc = ops::broadcast_freq(&residual, h)?;
                let y = match self.front {
                    None => x.add(&f2_out)?.add(&bc)?,
                    Some(_) => f2_out.add(&bc)?,
                };
                (y, None)
            }
            CombineMode::SigmoidAttention => {
                let att = ops::sigmoid(&residual);
                let gated = f2_out.mul(&ops::broadcast_freq(&att, h)?)?;
                let y = match self.front {
                    None => x.add(&gated)?,
                    Some(_) => gated,
                };
                (y, Some(att))
            }
        };

        Ok((
            y,
            BlockTrace {
                front,
                f2,
                f2_out,
                pool_argmax,
                f1,
                residual,
                attention,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, trace: &BlockTrace<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let f2_shape = trace.f2_out.shape();
        grad_out.expect_shape(f2_shape)?;

        let (mut g_f2, g_r) = match &trace.attention {
            None => (grad_out.clone(), ops::broadcast_freq_backward(grad_out)),
            Some(att) => {
                let g_f2 = grad_out.mul(&ops::broadcast_freq(att, f2_shape.h)?)?;
                let g_att = ops::broadcast_freq_backward(&grad_out.mul(&trace.f2_out)?);
                (g_f2, ops::sigmoid_backward(att, &g_att)?)
            }
        };

        // f1, in reverse
        let f1 = &trace.f1;
        let g = ops::channel_dropout_backward(&g_r, &f1.mask);
        let g = self.f1_pointwise.backward(&f1.swished, &g)?;
        let g = ops::swish_backward(&f1.pre_swish, &g)?;
        let g = self.f1_bn.backward(&f1.bn, &g)?;
        let g_pooled = self.f1_conv.backward(&f1.input, &g)?;

        let g_pool_in = match &trace.pool_argmax {
            None => ops::avg_pool_freq_backward(&g_pooled, f2_shape.h)?,
            Some(arg) => ops::max_pool_freq_backward(&g_pooled, arg, f2_shape.h),
        };
        g_f2.add_assign(&g_pool_in)?;

        let g = self.f2_ssn.backward(&trace.f2.ssn, &g_f2)?;
        let g_x1 = self.f2_conv.backward(&trace.f2.input, &g)?;

        match (&mut self.front, &trace.front) {
            (Some(front), Some(ft)) => {
                let g = ops::relu_backward(&ft.pre_relu, &g_x1)?;
                let g = front.bn.backward(&ft.bn, &g)?;
                front.conv.backward(&ft.input, &g)
            }
            (None, None) => g_x1.add(grad_out),
            _ => Err(config_err("trace does not match block kind")),
        }
    }

    /// Folds the training-mode batch statistics of `trace` into the running estimates.
    pub fn commit_stats(&mut self, trace: &BlockTrace<T>) {
        if let (Some(front), Some(ft)) = (&mut self.front, &trace.front) {
            front.bn.update_running(&ft.bn);
        }
        self.f2_ssn.update_running(&trace.f2.ssn);
        self.f1_bn.update_running(&trace.f1.bn);
    }
}

impl<T: Scalar> Module<T> for BlockParams<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &Tensor<T>)) {
        if let Some(front) = &self.front {
            front.conv.visit(&join(prefix, "front.conv"), f);
            front.bn.visit(&join(prefix, "front.bn"), f);
        }
        self.f2_conv.visit(&join(prefix, "f2.conv"), f);
        self.f2_ssn.visit(&join(prefix, "f2.ssn"), f);
        self.f1_conv.visit(&join(prefix, "f1.conv"), f);
        self.f1_bn.visit(&join(prefix, "f1.bn"), f);
        self.f1_pointwise.visit(&join(prefix, "f1.pointwise"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &mut Tensor<T>)) {
        if let Some(front) = &mut self.front {
            front.conv.visit_mut(&join(prefix, "front.conv"), f);
            front.bn.visit_mut(&join(prefix, "front.bn"), f);
        }
        self.f2_conv.visit_mut(&join(prefix, "f2.conv"), f);
        self.f2_ssn.visit_mut(&join(prefix, "f2.ssn"), f);
        self.f1_conv.visit_mut(&join(prefix, "f1.conv"), f);
        self.f1_bn.visit_mut(&join(prefix, "f1.bn"), f);
        self.f1_pointwise
            .visit_mut(&join(prefix, "f1.pointwise"), f);
    }
}
