//! Grouped, strided, dilated 2-D convolution over (n, c, h, w) tensors.
//!
//! Weights are stored as a tensor of shape `(out_channels, in_channels / groups, kh, kw)`.
//! Depthwise convolution is `groups == in == out`; pointwise is a 1x1 kernel with one group.

use rayon::prelude::*;

use crate::error::{config_err, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    /// Zeros added on each side.
    pub padding: (usize, usize),
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub const fn new(kernel: (usize, usize)) -> Self {
        Self {
            kernel,
            stride: (1, 1),
            dilation: (1, 1),
            padding: (0, 0),
            groups: 1,
            bias: false,
        }
    }

    pub const fn pointwise() -> Self {
        Self::new((1, 1))
    }

    pub const fn depthwise(kernel: (usize, usize), channels: usize) -> Self {
        Self::new(kernel).with_groups(channels)
    }

    pub const fn with_stride(mut self, stride: (usize, usize)) -> Self {
        self.stride = stride;
        self
    }

    pub const fn with_dilation(mut self, dilation: (usize, usize)) -> Self {
        self.dilation = dilation;
        self
    }

    pub const fn with_padding(mut self, padding: (usize, usize)) -> Self {
        self.padding = padding;
        self
    }

    pub const fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub const fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn taps(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }

    /// Output length along one axis, or `None` if the dilated window does not fit.
    fn out_len(len: usize, k: usize, s: usize, d: usize, p: usize) -> Option<usize> {
        let span = d * (k - 1) + 1;
        let padded = len + 2 * p;
        if s == 0 || k == 0 || d == 0 || padded < span {
            return None;
        }
        Some((padded - span) / s + 1)
    }

    /// Output shape for an input of shape `x` producing `out_channels` channels.
    pub fn output_shape(&self, x: Shape, out_channels: usize) -> Result<Shape> {
        let (kh, kw) = self.kernel;
        let h = Self::out_len(x.h, kh, self.stride.0, self.dilation.0, self.padding.0);
        let w = Self::out_len(x.w, kw, self.stride.1, self.dilation.1, self.padding.1);
        match (h, w) {
            (Some(h), Some(w)) => Ok(Shape::new(x.n, out_channels, h, w)),
            _ => Err(config_err(format!(
                "conv {:?} produces an empty output for input {x}",
                self
            ))),
        }
    }

    /// Weight tensor shape for the given channel counts.
    pub fn weight_shape(&self, in_channels: usize, out_channels: usize) -> Shape {
        Shape::new(
            out_channels,
            in_channels / self.groups.max(1),
            self.kernel.0,
            self.kernel.1,
        )
    }

    pub fn validate(&self, in_channels: usize, out_channels: usize) -> Result<()> {
        if self.groups == 0 || in_channels % self.groups != 0 || out_channels % self.groups != 0 {
            return Err(config_err(format!(
                "groups {} must divide in_channels {in_channels} and out_channels {out_channels}",
                self.groups
            )));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 || self.dilation.0 == 0 || self.dilation.1 == 0
        {
            return Err(config_err("stride and dilation must be positive"));
        }
        Ok(())
    }

    /// Multiplies in one forward pass: every output element costs `taps * in_per_group`.
    pub fn mults(&self, out: Shape, in_channels: usize) -> u64 {
        (out.numel() * self.taps() * (in_channels / self.groups)) as u64
    }
}

/// Valid output positions `o` with `0 <= o*stride + offset < len`, as a half-open range.
#[inline]
fn valid_range(out_len: usize, len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let lo = if offset >= 0 {
        0
    } else {
        ((-offset) as usize).div_ceil(stride)
    };
    let limit = len as isize - offset;
    let hi = if limit <= 0 {
        0
    } else {
        ((limit as usize).div_ceil(stride)).min(out_len)
    };
    (lo, hi.max(lo))
}

fn check(x: Shape, weight: Shape, bias: Option<Shape>, spec: &ConvSpec) -> Result<Shape> {
    let out_c = weight.n;
    spec.validate(x.c, out_c)?;
    if weight.c * spec.groups != x.c || (weight.h, weight.w) != spec.kernel {
        return Err(config_err(format!(
            "weight {weight} incompatible with input {x} and {spec:?}"
        )));
    }
    if let Some(b) = bias {
        if b.numel() != out_c {
            return Err(config_err(format!(
                "bias of {} values for {out_c} channels",
                b.numel()
            )));
        }
    }
    spec.output_shape(x, out_c)
}

/// Forward convolution. `bias`, when given, holds one value per output channel.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ws = weight.shape();
    let ys = check(xs, ws, bias.map(|b| b.shape()), spec)?;
    let cin_g = ws.c;
    let cout_g = ys.c / spec.groups;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let (ph, pw) = (spec.padding.0 as isize, spec.padding.1 as isize);
    let xd = x.data();
    let wd = weight.data();
    let bd = bias.map(|b| b.data());

    let mut out = vec![T::zero(); ys.numel()];
    out.par_chunks_mut(ys.plane())
        .enumerate()
        .for_each(|(plane, y)| {
            let n = plane / ys.c;
            let co = plane % ys.c;
            let g = co / cout_g;
            if let Some(b) = bd {
                y.iter_mut().for_each(|v| *v = b[co]);
            }
            for cl in 0..cin_g {
                let ci = g * cin_g + cl;
                let xplane = &xd[xs.index(n, ci, 0, 0)..][..xs.plane()];
                for i in 0..kh {
                    let off_h = (i * dh) as isize - ph;
                    let (oh0, oh1) = valid_range(ys.h, xs.h, sh, off_h);
                    for j in 0..kw {
                        let wv = wd[ws.index(co, cl, i, j)];
                        let off_w = (j * dw) as isize - pw;
                        let (ow0, ow1) = valid_range(ys.w, xs.w, sw, off_w);
                        for oh in oh0..oh1 {
                            let ih = (oh * sh) as isize + off_h;
                            let xrow = &xplane[ih as usize * xs.w..][..xs.w];
                            let yrow = &mut y[oh * ys.w..][..ys.w];
                            for ow in ow0..ow1 {
                                let iw = ((ow * sw) as isize + off_w) as usize;
                                yrow[ow] += wv * xrow[iw];
                            }
                        }
                    }
                }
            }
        });
    Tensor::from_vec(ys, out)
}

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    let ws = weight.shape();
    let ys = check(xs, ws, None, spec)?;
    grad_out.expect_shape(ys)?;
    let cin_g = ws.c;
    let cout_g = ys.c / spec.groups;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let (ph, pw) = (spec.padding.0 as isize, spec.padding.1 as isize);
    let xd = x.data();
    let wd = weight.data();
    let gd = grad_out.data();

    // Input gradient, one (n, ci) plane per task.
    let mut gx = vec![T::zero(); xs.numel()];
    gx.par_chunks_mut(xs.plane())
        .enumerate()
        .for_each(|(plane, gxp)| {
            let n = plane / xs.c;
            let ci = plane % xs.c;
            let g = ci / cin_g;
            let cl = ci % cin_g;
            for co in g * cout_g..(g + 1) * cout_g {
                let gplane = &gd[ys.index(n, co, 0, 0)..][..ys.plane()];
                for i in 0..kh {
                    let off_h = (i * dh) as isize - ph;
                    let (oh0, oh1) = valid_range(ys.h, xs.h, sh, off_h);
                    for j in 0..kw {
                        let wv = wd[ws.index(co, cl, i, j)];
                        let off_w = (j * dw) as isize - pw;
                        let (ow0, ow1) = valid_range(ys.w, xs.w, sw, off_w);
                        for oh in oh0..oh1 {
                            let ih = ((oh * sh) as isize + off_h) as usize;
                            let grow = &gplane[oh * ys.w..][..ys.w];
                            let xrow = &mut gxp[ih * xs.w..][..xs.w];
                            for ow in ow0..ow1 {
                                let iw = ((ow * sw) as isize + off_w) as usize;
                                xrow[iw] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        });

    // Weight gradient, one output channel per task; batch summed in order.
    let per_co = cin_g * kh * kw;
    let mut gw = vec![T::zero(); ws.numel()];
    gw.par_chunks_mut(per_co).enumerate().for_each(|(co, gwc)| {
        let g = co / cout_g;
        for n in 0..xs.n {
            let gplane = &gd[ys.index(n, co, 0, 0)..][..ys.plane()];
            for cl in 0..cin_g {
                let ci = g * cin_g + cl;
                let xplane = &xd[xs.index(n, ci, 0, 0)..][..xs.plane()];
                for i in 0..kh {
                    let off_h = (i * dh) as isize - ph;
                    let (oh0, oh1) = valid_range(ys.h, xs.h, sh, off_h);
                    for j in 0..kw {
                        let off_w = (j * dw) as isize - pw;
                        let (ow0, ow1) = valid_range(ys.w, xs.w, sw, off_w);
                        let mut acc = T::zero();
                        for oh in oh0..oh1 {
                            let ih = ((oh * sh) as isize + off_h) as usize;
                            let grow = &gplane[oh * ys.w..][..ys.w];
                            let xrow = &xplane[ih * xs.w..][..xs.w];
                            for ow in ow0..ow1 {
                                let iw = ((ow * sw) as isize + off_w) as usize;
                                acc += grow[ow] * xrow[iw];
                            }
                        }
                        gwc[(cl * kh + i) * kw + j] += acc;
                    }
                }
            }
        }
    });

    let bias = spec.bias.then(|| {
        (0..ys.c)
            .map(|co| {
                let mut acc = T::zero();
                for n in 0..ys.n {
                    acc += gd[ys.index(n, co, 0, 0)..][..ys.plane()]
                        .iter()
                        .copied()
                        .sum::<T>();
                }
                acc
            })
            .collect()
    });

    Ok(ConvGrads {
        input: Tensor::from_vec(xs, gx)?,
        weight: gw,
        bias,
    })
}
