//! Parameterized layers built on the kernels in [`crate::ops`], plus the plumbing shared
//! by blocks and the model: named-tensor visiting, a multiply meter and the forward context.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops::{self, ConvSpec, NormCache, NormParams};
use crate::tensor::{Scalar, Shape, Tensor};

/// What a stored tensor is for. Decides learnability and weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorRole {
    Weight,
    Bias,
    Scale,
    Shift,
    RunningMean,
    RunningVar,
}

impl TensorRole {
    pub fn learnable(self) -> bool {
        matches!(self, Self::Weight | Self::Bias | Self::Scale | Self::Shift)
    }

    /// Only convolution weights receive weight decay.
    pub fn decays(self) -> bool {
        self == Self::Weight
    }
}

/// Something owning named tensors.
pub trait Module<T: Scalar> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &Tensor<T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &mut Tensor<T>));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, role, t| {
            if role.learnable() {
                n += t.len();
            }
        });
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, _, t| t.zero_grad());
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Runtime multiply counter, incremented by every conv and norm layer a forward pass runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Meter {
    pub mults: u64,
}

impl Meter {
    pub fn add(&mut self, n: u64) {
        self.mults += n;
    }
}

/// Per-forward state: mode, the dropout stream and the multiply meter.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub training: bool,
    pub rng: ChaCha8Rng,
    pub meter: Meter,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Self {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            meter: Meter::default(),
        }
    }

    pub fn eval() -> Self {
        Self {
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            meter: Meter::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub spec: ConvSpec,
    in_channels: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// All-zero weights and bias.
    pub fn zeros(in_channels: usize, out_channels: usize, spec: ConvSpec) -> Result<Self> {
        spec.validate(in_channels, out_channels)?;
        Ok(Self {
            weight: Tensor::zeros(spec.weight_shape(in_channels, out_channels)),
            bias: spec
                .bias
                .then(|| Tensor::zeros(Shape::new(1, out_channels, 1, 1))),
            spec,
            in_channels,
        })
    }

    /// Uniform init in `±1/sqrt(fan_in)` for weights and bias.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        spec: ConvSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let mut conv = Self::zeros(in_channels, out_channels, spec)?;
        let fan_in = (in_channels / spec.groups) * spec.taps();
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in conv.weight.data_mut() {
            *v = T::of(rng.gen_range(-bound..bound));
        }
        if let Some(b) = conv.bias.as_mut() {
            for v in b.data_mut() {
                *v = T::of(rng.gen_range(-bound..bound));
            }
        }
        Ok(conv)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn forward(&self, x: &Tensor<T>, meter: &mut Meter) -> Result<Tensor<T>> {
        let y = ops::conv2d(x, &self.weight, self.bias.as_ref(), &self.spec)?;
        meter.add(self.spec.mults(y.shape(), self.in_channels));
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = ops::conv2d_backward(x, &self.weight, &self.spec, grad_out)?;
        self.weight.accumulate_grad(&g.weight);
        if let (Some(b), Some(gb)) = (self.bias.as_mut(), g.bias.as_ref()) {
            b.accumulate_grad(gb);
        }
        Ok(g.input)
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &Tensor<T>)) {
        f(&join(prefix, "weight"), TensorRole::Weight, &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), TensorRole::Bias, b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &mut Tensor<T>)) {
        f(
            &join(prefix, "weight"),
            TensorRole::Weight,
            &mut self.weight,
        );
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), TensorRole::Bias, b);
        }
    }
}

impl<T: Scalar> NormParams<T> {
    pub fn forward(
        &self,
        x: &Tensor<T>,
        training: bool,
        meter: &mut Meter,
    ) -> Result<(Tensor<T>, NormCache<T>)> {
        let out = ops::normalize(x, self, training)?;
        meter.add(out.0.len() as u64);
        Ok(out)
    }

    pub fn backward(&mut self, cache: &NormCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = ops::normalize_backward(cache, self, grad_out)?;
        self.gamma.accumulate_grad(&g.gamma);
        self.beta.accumulate_grad(&g.beta);
        Ok(g.input)
    }

    pub fn zero_affine(&mut self) {
        self.gamma
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = T::zero());
        self.beta.data_mut().iter_mut().for_each(|v| *v = T::zero());
    }
}

impl<T: Scalar> Module<T> for NormParams<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &Tensor<T>)) {
        f(&join(prefix, "gamma"), TensorRole::Scale, &self.gamma);
        f(&join(prefix, "beta"), TensorRole::Shift, &self.beta);
        f(
            &join(prefix, "running_mean"),
            TensorRole::RunningMean,
            &self.running_mean,
        );
        f(
            &join(prefix, "running_var"),
            TensorRole::RunningVar,
            &self.running_var,
        );
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &mut Tensor<T>)) {
        f(&join(prefix, "gamma"), TensorRole::Scale, &mut self.gamma);
        f(&join(prefix, "beta"), TensorRole::Shift, &mut self.beta);
        f(
            &join(prefix, "running_mean"),
            TensorRole::RunningMean,
            &mut self.running_mean,
        );
        f(
            &join(prefix, "running_var"),
            TensorRole::RunningVar,
            &mut self.running_var,
        );
    }
}
