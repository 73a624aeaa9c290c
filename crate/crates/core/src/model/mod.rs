//! BC-ResNet-τ: the base layer map with every channel width scaled by τ.
//!
//! | input        | operator          | n | c  | s     | d |
//! |--------------|-------------------|---|----|-------|---|
//! | 1 x 40 x W   | conv 5x5 + BN+ReLU| - | 16 | (2,1) | 1 |
//! | 16 x 20 x W  | BC-ResBlock       | 2 | 8  | 1     | 1 |
//! | 8 x 20 x W   | BC-ResBlock       | 2 | 12 | (2,1) | 2 |
//! | 12 x 10 x W  | BC-ResBlock       | 4 | 16 | (2,1) | 4 |
//! | 16 x 5 x W   | BC-ResBlock       | 4 | 20 | 1     | 8 |
//! | 20 x 5 x W   | depthwise 5x5     | - | 20 | 1     | 1 |
//! | 20 x 1 x W   | conv 1x1 + ReLU   | - | 32 | 1     | 1 |
//! | 32 x 1 x W   | time average      | - | -  | -     | - |
//! | 32 x 1 x 1   | conv 1x1          | - | 12 | -     | - |

pub mod checkpoint;
pub mod cost;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block::{BlockConfig, BlockParams, BlockTrace, CombineMode, ReduceMode};
use crate::error::{config_err, Result};
use crate::nn::{join, Conv2d, Ctx, Module, TensorRole};
use crate::ops::{self, ConvSpec, NormCache, NormParams};
use crate::tensor::{Scalar, Shape, Tensor};

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint};
pub use cost::{cost_report, count_mults, count_params, CostReport, LayerCost};

pub const STEM_WIDTH: usize = 16;
pub const HEAD_WIDTH: usize = 32;
pub const N_MELS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSpec {
    pub blocks: usize,
    pub width: usize,
    pub freq_stride: usize,
    pub dilation: usize,
}

pub const STAGES: [StageSpec; 4] = [
    StageSpec {
        blocks: 2,
        width: 8,
        freq_stride: 1,
        dilation: 1,
    },
    StageSpec {
        blocks: 2,
        width: 12,
        freq_stride: 2,
        dilation: 2,
    },
    StageSpec {
        blocks: 4,
        width: 16,
        freq_stride: 2,
        dilation: 4,
    },
    StageSpec {
        blocks: 4,
        width: 20,
        freq_stride: 1,
        dilation: 8,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub tau: f64,
    pub n_classes: usize,
    pub n_mels: usize,
    /// Frame count used for cost reporting; the network itself accepts any W.
    pub frames: usize,
    pub ssn_sub_bands: usize,
    pub dropout_p: f64,
    pub reduce_mode: ReduceMode,
    pub combine_mode: CombineMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::bc_resnet(1.0)
    }
}

/// Scaled channel widths of every layer group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Widths {
    pub stem: usize,
    pub stages: [usize; 4],
    pub head: usize,
}

impl ModelConfig {
    /// BC-ResNet-τ with 12 classes, 40 Mel bins and 100-frame cost reporting.
    pub fn bc_resnet(tau: f64) -> Self {
        Self {
            tau,
            n_classes: 12,
            n_mels: N_MELS,
            frames: 100,
            ssn_sub_bands: 5,
            dropout_p: 0.1,
            reduce_mode: ReduceMode::Avg,
            combine_mode: CombineMode::BroadcastAdd,
        }
    }

    pub fn with_classes(mut self, n_classes: usize) -> Self {
        self.n_classes = n_classes;
        self
    }

    /// `round(base * tau)`, half rounding up.
    pub fn scale(&self, base: usize) -> Result<usize> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(config_err(format!(
                "width multiplier tau must be > 0, got {}",
                self.tau
            )));
        }
        let w = (base as f64 * self.tau + 0.5).floor();
        if w < 1.0 {
            return Err(config_err(format!(
                "tau {} scales width {base} to zero",
                self.tau
            )));
        }
        Ok(w as usize)
    }

    pub fn widths(&self) -> Result<Widths> {
        let mut stages = [0; 4];
        for (w, s) in stages.iter_mut().zip(&STAGES) {
            *w = self.scale(s.width)?;
        }
        Ok(Widths {
            stem: self.scale(STEM_WIDTH)?,
            stages,
            head: self.scale(HEAD_WIDTH)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.widths()?;
        if self.n_mels != N_MELS {
            return Err(config_err(format!(
                "the layer map needs {N_MELS} Mel bins, got {}",
                self.n_mels
            )));
        }
        if self.n_classes == 0 {
            return Err(config_err("n_classes must be positive"));
        }
        if self.frames == 0 {
            return Err(config_err("frames must be positive"));
        }
        Ok(())
    }

    /// The twelve block configurations in order.
    pub fn block_configs(&self) -> Result<Vec<BlockConfig>> {
        self.validate()?;
        let widths = self.widths()?;
        let mut prev = widths.stem;
        let mut out = Vec::new();
        for (stage, &width) in STAGES.iter().zip(&widths.stages) {
            for i in 0..stage.blocks {
                let stride = if i == 0 { stage.freq_stride } else { 1 };
                let mut cfg = BlockConfig::new(prev, width, stride, stage.dilation);
                cfg.ssn_sub_bands = self.ssn_sub_bands;
                cfg.dropout_p = self.dropout_p;
                cfg.reduce_mode = self.reduce_mode;
                cfg.combine_mode = self.combine_mode;
                cfg.validate()?;
                out.push(cfg);
                prev = width;
            }
        }
        Ok(out)
    }

    pub(crate) fn stem_spec(&self) -> ConvSpec {
        ConvSpec::new((5, 5))
            .with_stride((2, 1))
            .with_padding((2, 2))
    }

    pub(crate) fn tail_depthwise_spec(&self, channels: usize) -> ConvSpec {
        ConvSpec::depthwise((5, 5), channels).with_padding((0, 2))
    }

    pub(crate) fn head_spec(&self) -> ConvSpec {
        ConvSpec::pointwise().with_bias(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub cfg: ModelConfig,
    pub stem: Conv2d<T>,
    pub stem_bn: NormParams<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub tail_depthwise: Conv2d<T>,
    pub tail_pointwise: Conv2d<T>,
    pub classifier: Conv2d<T>,
}

/// Forward state kept for the backward pass, and the (channels, height) after each
/// row of the layer map.
#[derive(Debug, Clone)]
pub struct ModelTrace<T> {
    input: Tensor<T>,
    stem_bn: NormCache<T>,
    stem_pre_relu: Tensor<T>,
    pub blocks: Vec<BlockTrace<T>>,
    tail_in: Tensor<T>,
    tail_mid: Tensor<T>,
    head_pre_relu: Tensor<T>,
    pooled: Tensor<T>,
    pub shape_ledger: Vec<(usize, usize)>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn build<R: Rng + ?Sized>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        let widths = cfg.widths()?;
        let blocks = cfg
            .block_configs()?
            .into_iter()
            .map(|b| BlockParams::new(b, rng))
            .collect::<Result<Vec<_>>>()?;
        let last = widths.stages[3];
        Ok(Self {
            cfg,
            stem: Conv2d::new(1, widths.stem, cfg.stem_spec(), rng)?,
            stem_bn: NormParams::batch_norm(widths.stem),
            blocks,
            tail_depthwise: Conv2d::new(last, last, cfg.tail_depthwise_spec(last), rng)?,
            tail_pointwise: Conv2d::new(last, widths.head, cfg.head_spec(), rng)?,
            classifier: Conv2d::new(widths.head, cfg.n_classes, cfg.head_spec(), rng)?,
        })
    }

    /// Runs the network on a (n, 1, n_mels, W) batch. Logits come back as (n, classes, 1, 1).
    pub fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<(Tensor<T>, ModelTrace<T>)> {
        let s = x.shape();
        if s.c != 1 || s.h != self.cfg.n_mels {
            return Err(config_err(format!(
                "expected input (n, 1, {}, W), got {s}",
                self.cfg.n_mels
            )));
        }
        let mut ledger = Vec::new();
        let mut note = |t: &Tensor<T>| ledger.push((t.shape().c, t.shape().h));

        let a = self.stem.forward(x, &mut ctx.meter)?;
        let (stem_pre_relu, stem_bn) = self.stem_bn.forward(&a, ctx.training, &mut ctx.meter)?;
        let mut h = ops::relu(&stem_pre_relu);
        note(&h);

        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut stage_ends = Vec::new();
        let mut idx = 0;
        for stage in &STAGES {
            idx += stage.blocks;
            stage_ends.push(idx);
        }
        for (i, block) in self.blocks.iter().enumerate() {
            let (y, trace) = block.forward(&h, ctx)?;
            traces.push(trace);
            h = y;
            if stage_ends.contains(&(i + 1)) {
                note(&h);
            }
        }

        let tail_in = h;
        let tail_mid = self.tail_depthwise.forward(&tail_in, &mut ctx.meter)?;
        note(&tail_mid);
        let head_pre_relu = self.tail_pointwise.forward(&tail_mid, &mut ctx.meter)?;
        let head = ops::relu(&head_pre_relu);
        note(&head);
        let pooled = ops::avg_pool_time(&head);
        note(&pooled);
        let logits = self.classifier.forward(&pooled, &mut ctx.meter)?;
        note(&logits);

        Ok((
            logits,
            ModelTrace {
                input: x.clone(),
                stem_bn,
                stem_pre_relu,
                blocks: traces,
                tail_in,
                tail_mid,
                head_pre_relu,
                pooled,
                shape_ledger: ledger,
            },
        ))
    }

    /// Eval-mode logits as one row per sample.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let (logits, _) = self.forward(x, &mut Ctx::eval())?;
        let k = self.cfg.n_classes;
        Ok(logits.data().chunks(k).map(<[T]>::to_vec).collect())
    }

    /// Accumulates gradients of every parameter given d(loss)/d(logits); returns the
    /// input gradient.
    pub fn backward(
        &mut self,
        trace: &ModelTrace<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let g = self.classifier.backward(&trace.pooled, grad_logits)?;
        let g = ops::avg_pool_time_backward(&g, trace.head_pre_relu.shape().w);
        let g = ops::relu_backward(&trace.head_pre_relu, &g)?;
        let g = self.tail_pointwise.backward(&trace.tail_mid, &g)?;
        let mut g = self.tail_depthwise.backward(&trace.tail_in, &g)?;
        for (block, bt) in self.blocks.iter_mut().zip(&trace.blocks).rev() {
            g = block.backward(bt, &g)?;
        }
        let g = ops::relu_backward(&trace.stem_pre_relu, &g)?;
        let g = self.stem_bn.backward(&trace.stem_bn, &g)?;
        self.stem.backward(&trace.input, &g)
    }

    /// Applies the running-statistic updates recorded by a training-mode forward.
    pub fn commit_stats(&mut self, trace: &ModelTrace<T>) {
        self.stem_bn.update_running(&trace.stem_bn);
        for (block, bt) in self.blocks.iter_mut().zip(&trace.blocks) {
            block.commit_stats(bt);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::build(self.cfg, &mut ChaCha8Rng::seed_from_u64(0))
            .expect("config already validated");
        let mut src = Vec::new();
        self.visit("", &mut |_, _, t| src.push(t.cast::<U>()));
        let mut it = src.into_iter();
        out.visit_mut("", &mut |_, _, t| *t = it.next().expect("same layout"));
        out
    }
}

impl<T: Scalar> Module<T> for ModelParams<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &Tensor<T>)) {
        self.stem.visit(&join(prefix, "stem.conv"), f);
        self.stem_bn.visit(&join(prefix, "stem.bn"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.tail_depthwise
            .visit(&join(prefix, "tail.depthwise"), f);
        self.tail_pointwise
            .visit(&join(prefix, "tail.pointwise"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorRole, &mut Tensor<T>)) {
        self.stem.visit_mut(&join(prefix, "stem.conv"), f);
        self.stem_bn.visit_mut(&join(prefix, "stem.bn"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.tail_depthwise
            .visit_mut(&join(prefix, "tail.depthwise"), f);
        self.tail_pointwise
            .visit_mut(&join(prefix, "tail.pointwise"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}

/// Shape used to feed a batch of spectrograms.
pub fn input_shape(batch: usize, frames: usize) -> Shape {
    Shape::new(batch, 1, N_MELS, frames)
}
