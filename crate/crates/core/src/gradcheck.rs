//! Central finite-difference verification of every backward pass, in f64.
//!
//! Each check draws random inputs and parameters, contracts the output with a random
//! probe tensor `R` to get the scalar `L = sum(y * R)`, and compares the analytic
//! gradient of `L` (backward called with `R`) against a central difference of `L` for
//! every coordinate of every input and parameter. The default stencil is the five-point
//! one, `(-L(θ+2h) + 8L(θ+h) - 8L(θ-h) + L(θ-2h)) / 12h`; the three-point
//! `(L(θ+h) - L(θ-h)) / 2h` is available too, and at `h = 1e-3` its truncation error on
//! whole blocks is around `1e-4`. Coordinates whose perturbation crosses a
//! ReLU kink or changes a max-pool winner are skipped and counted.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::{BlockConfig, BlockParams, CombineMode, ReduceMode};
use crate::error::Result;
use crate::nn::{Ctx, Module, TensorRole};
use crate::ops::{self, ConvSpec, NormParams};
use crate::seed::derive_seed;
use crate::tensor::{Shape, Tensor};
use crate::train::cross_entropy;

pub const STEP: f64 = 1e-3;
pub const THRESHOLD: f64 = 1e-5;
/// Lower bound of the relative-error denominator, so coordinates with a near-zero
/// gradient are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-3;

/// A deliberately wrong derivative, for checking that the checker catches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Drops the `x s (1 - s)` term of the swish derivative.
    SwishDerivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    ThreePoint,
    FivePoint,
}

impl Stencil {
    fn offsets(self) -> &'static [(f64, f64)] {
        match self {
            Self::ThreePoint => &[(1.0, 0.5), (-1.0, -0.5)],
            Self::FivePoint => &[
                (2.0, -1.0 / 12.0),
                (1.0, 8.0 / 12.0),
                (-1.0, -8.0 / 12.0),
                (-2.0, 1.0 / 12.0),
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub step: f64,
    pub stencil: Stencil,
    pub fault: Option<Fault>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            threshold: THRESHOLD,
            step: STEP,
            stencil: Stencil::FivePoint,
            fault: None,
        }
    }
}

impl GradcheckOptions {
    pub fn with_seed(base: u64) -> Self {
        Self {
            seeds: (0..5).map(|i| derive_seed(&[base, i])).collect(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Op,
    Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub kind: CheckKind,
    /// Worst relative error over all seeds and coordinates.
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub threshold: f64,
    pub step: f64,
    pub stencil: Stencil,
    pub seeds: usize,
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.max_rel_err < self.threshold)
    }

    pub fn worst(&self) -> Option<&CheckResult> {
        self.results
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn count(&self, kind: CheckKind) -> usize {
        self.results.iter().filter(|r| r.kind == kind).count()
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<28} {:>12} {:>9} {:>8}  status   (h = {:e}, {}, {} seeds)",
            "check",
            "max rel err",
            "checked",
            "skipped",
            self.step,
            match self.stencil {
                Stencil::ThreePoint => "3-point",
                Stencil::FivePoint => "5-point",
            },
            self.seeds
        )?;
        for r in &self.results {
            let kind = match r.kind {
                CheckKind::Op => "op",
                CheckKind::Block => "block",
            };
            writeln!(
                f,
                "{:<28} {:>12.3e} {:>9} {:>8}  {}",
                format!("{kind}:{}", r.name),
                r.max_rel_err,
                r.checked,
                r.skipped,
                if r.max_rel_err < self.threshold {
                    "ok"
                } else {
                    "FAIL"
                }
            )?;
        }
        write!(
            f,
            "{} (threshold {:e})",
            if self.passed() {
                "all checks passed"
            } else {
                "gradient check FAILED"
            },
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    max: f64,
    checked: usize,
    skipped: usize,
}

impl Stats {
    fn merge(self, o: Stats) -> Stats {
        Stats {
            max: self.max.max(o.max),
            checked: self.checked + o.checked,
            skipped: self.skipped + o.skipped,
        }
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Loss and kink pattern at a point given as a list of flat tensors.
type Objective<'a> = dyn FnMut(&[Vec<f64>]) -> Result<(f64, Vec<usize>)> + 'a;

#[derive(Debug, Clone, Copy)]
struct Probe {
    step: f64,
    stencil: Stencil,
}

impl Probe {
    fn compare(
        self,
        point: &[Vec<f64>],
        analytic: &[Vec<f64>],
        f: &mut Objective<'_>,
    ) -> Result<Stats> {
        let (_, base) = f(point)?;
        let mut st = Stats::default();
        let mut p = point.to_vec();
        for (i, grads) in analytic.iter().enumerate() {
            for (j, &a) in grads.iter().enumerate() {
                let orig = p[i][j];
                let mut num = 0.0;
                let mut kinked = false;
                for &(k, w) in self.stencil.offsets() {
                    p[i][j] = orig + k * self.step;
                    let (l, kp) = f(&p)?;
                    kinked |= kp != base;
                    num += w * l;
                }
                p[i][j] = orig;
                if kinked {
                    st.skipped += 1;
                    continue;
                }
                st.max = st.max.max(rel_err(a, num / self.step));
                st.checked += 1;
            }
        }
        Ok(st)
    }
}

fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Values bounded away from zero, for inputs of kinked functions.
fn away_from_zero(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.5);
        if rng.gen::<bool>() {
            m
        } else {
            -m
        }
    })
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), data.to_vec()).expect("same length")
}

/// Checks a unary elementwise-or-reshaping op with no parameters.
fn unary(
    pr: Probe,
    x: Tensor<f64>,
    rng: &mut ChaCha8Rng,
    fwd: impl Fn(&Tensor<f64>) -> Result<(Tensor<f64>, Vec<usize>)>,
    bwd: impl Fn(&Tensor<f64>, &Tensor<f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
) -> Result<Stats> {
    let (y, _) = fwd(&x)?;
    let r = uniform(y.shape(), -1.0, 1.0, rng);
    let gx = bwd(&x, &y, &r)?;
    pr.compare(&[x.data().to_vec()], &[gx.into_data()], &mut |p| {
        let (y, k) = fwd(&with(&x, &p[0]))?;
        Ok((dot(&y, &r), k))
    })
}

fn conv(
    pr: Probe,
    spec: ConvSpec,
    x_shape: Shape,
    out_c: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Stats> {
    let x = uniform(x_shape, -1.0, 1.0, rng);
    let w = uniform(spec.weight_shape(x_shape.c, out_c), -1.0, 1.0, rng);
    let b = spec
        .bias
        .then(|| uniform(Shape::new(1, out_c, 1, 1), -1.0, 1.0, rng));
    let y = ops::conv2d(&x, &w, b.as_ref(), &spec)?;
    let r = uniform(y.shape(), -1.0, 1.0, rng);
    let g = ops::conv2d_backward(&x, &w, &spec, &r)?;
    let mut point = vec![x.data().to_vec(), w.data().to_vec()];
    let mut analytic = vec![g.input.into_data(), g.weight];
    if let (Some(b), Some(gb)) = (&b, g.bias) {
        point.push(b.data().to_vec());
        analytic.push(gb);
    }
    pr.compare(&point, &analytic, &mut |p| {
        let bias = b.as_ref().map(|b| with(b, &p[2]));
        let y = ops::conv2d(&with(&x, &p[0]), &with(&w, &p[1]), bias.as_ref(), &spec)?;
        Ok((dot(&y, &r), vec![]))
    })
}

fn norm(
    pr: Probe,
    x_shape: Shape,
    sub_bands: usize,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Stats> {
    let x = uniform(x_shape, -2.0, 2.0, rng);
    let mut p = NormParams::<f64>::subspectral(x_shape.c, sub_bands);
    let gs = p.gamma.shape();
    p.gamma = uniform(gs, 0.5, 1.5, rng);
    p.beta = uniform(gs, -0.5, 0.5, rng);
    if !training {
        p.running_mean = uniform(gs, -0.5, 0.5, rng);
        p.running_var = uniform(gs, 0.5, 2.0, rng);
    }
    let (y, cache) = ops::normalize(&x, &p, training)?;
    let r = uniform(y.shape(), -1.0, 1.0, rng);
    let g = ops::normalize_backward(&cache, &p, &r)?;
    let point = vec![
        x.data().to_vec(),
        p.gamma.data().to_vec(),
        p.beta.data().to_vec(),
    ];
    let analytic = vec![g.input.into_data(), g.gamma, g.beta];
    pr.compare(&point, &analytic, &mut |v| {
        let mut q = p.clone();
        q.gamma = with(&p.gamma, &v[1]);
        q.beta = with(&p.beta, &v[2]);
        let (y, _) = ops::normalize(&with(&x, &v[0]), &q, training)?;
        Ok((dot(&y, &r), vec![]))
    })
}

fn swish_backward_faulty(x: &Tensor<f64>, g: &Tensor<f64>) -> Result<Tensor<f64>> {
    x.zip_map(g, |v, g| g * ops::activation::sigmoid_scalar(v))
}

/// Spreads values so max-pool winners are separated by far more than the step.
fn spread(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut vals: Vec<f64> = (0..shape.numel()).map(|i| i as f64 * 0.05).collect();
    for i in (1..vals.len()).rev() {
        vals.swap(i, rng.gen_range(0..=i));
    }
    Tensor::from_vec(shape, vals).expect("sized to shape")
}

fn op_checks(pr: Probe, seed: u64, fault: Option<Fault>) -> Result<Vec<(&'static str, Stats)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let mut out = Vec::new();

    let general = ConvSpec::new((3, 3))
        .with_stride((2, 1))
        .with_dilation((1, 2))
        .with_padding((1, 2))
        .with_groups(2)
        .with_bias(true);
    out.push(("conv2d", conv(pr, general, Shape::new(2, 4, 6, 7), 6, rng)?));
    let dw = ConvSpec::depthwise((3, 1), 3)
        .with_stride((2, 1))
        .with_padding((1, 0));
    out.push((
        "conv2d_depthwise",
        conv(pr, dw, Shape::new(2, 3, 10, 5), 3, rng)?,
    ));
    let dil = ConvSpec::depthwise((1, 3), 3)
        .with_dilation((1, 3))
        .with_padding((0, 3));
    out.push((
        "conv2d_dilated_temporal",
        conv(pr, dil, Shape::new(2, 3, 1, 9), 3, rng)?,
    ));
    out.push((
        "conv2d_pointwise",
        conv(pr, ConvSpec::pointwise(), Shape::new(2, 3, 4, 5), 5, rng)?,
    ));

    out.push((
        "batch_norm_train",
        norm(pr, Shape::new(3, 3, 4, 5), 1, true, rng)?,
    ));
    out.push((
        "batch_norm_eval",
        norm(pr, Shape::new(2, 3, 4, 5), 1, false, rng)?,
    ));
    out.push((
        "subspectral_norm_train",
        norm(pr, Shape::new(2, 2, 10, 4), 5, true, rng)?,
    ));
    out.push((
        "subspectral_norm_eval",
        norm(pr, Shape::new(2, 2, 10, 4), 5, false, rng)?,
    ));

    let s = Shape::new(2, 3, 3, 4);
    out.push((
        "swish",
        unary(
            pr,
            uniform(s, -4.0, 4.0, rng),
            rng,
            |x| Ok((ops::swish(x), vec![])),
            |x, _, g| match fault {
                Some(Fault::SwishDerivative) => swish_backward_faulty(x, g),
                None => ops::swish_backward(x, g),
            },
        )?,
    ));
    out.push((
        "relu",
        unary(
            pr,
            away_from_zero(s, rng),
            rng,
            |x| {
                Ok((
                    ops::relu(x),
                    x.data().iter().map(|&v| usize::from(v > 0.0)).collect(),
                ))
            },
            |x, _, g| ops::relu_backward(x, g),
        )?,
    ));
    out.push((
        "sigmoid",
        unary(
            pr,
            uniform(s, -4.0, 4.0, rng),
            rng,
            |x| Ok((ops::sigmoid(x), vec![])),
            |_, y, g| ops::sigmoid_backward(y, g),
        )?,
    ));
    out.push((
        "avg_pool_freq",
        unary(
            pr,
            uniform(Shape::new(2, 3, 5, 4), -1.0, 1.0, rng),
            rng,
            |x| Ok((ops::avg_pool_freq(x), vec![])),
            |x, _, g| ops::avg_pool_freq_backward(g, x.shape().h),
        )?,
    ));
    out.push((
        "max_pool_freq",
        unary(
            pr,
            spread(Shape::new(2, 3, 5, 4), rng),
            rng,
            |x| Ok(ops::max_pool_freq(x)),
            |x, _, g| {
                Ok(ops::max_pool_freq_backward(
                    g,
                    &ops::max_pool_freq(x).1,
                    x.shape().h,
                ))
            },
        )?,
    ));
    out.push((
        "broadcast_freq",
        unary(
            pr,
            uniform(Shape::new(2, 3, 1, 4), -1.0, 1.0, rng),
            rng,
            |x| Ok((ops::broadcast_freq(x, 5)?, vec![])),
            |_, _, g| Ok(ops::broadcast_freq_backward(g)),
        )?,
    ));
    out.push((
        "avg_pool_time",
        unary(
            pr,
            uniform(Shape::new(2, 3, 1, 6), -1.0, 1.0, rng),
            rng,
            |x| Ok((ops::avg_pool_time(x), vec![])),
            |x, _, g| Ok(ops::avg_pool_time_backward(g, x.shape().w)),
        )?,
    ));

    let drop_seed = rng.gen::<u64>();
    let dropout = |x: &Tensor<f64>| {
        let mut r = ChaCha8Rng::seed_from_u64(drop_seed);
        ops::channel_dropout(x, 0.3, &mut r, true)
    };
    out.push((
        "channel_dropout",
        unary(
            pr,
            uniform(Shape::new(4, 5, 2, 3), -1.0, 1.0, rng),
            rng,
            |x| Ok((dropout(x)?.0, vec![])),
            |x, _, g| Ok(ops::channel_dropout_backward(g, &dropout(x)?.1)),
        )?,
    ));

    let logits = uniform(Shape::new(3, 12, 1, 1), -3.0, 3.0, rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..12)).collect();
    let (_, g) = cross_entropy(&logits, &labels)?;
    out.push((
        "cross_entropy",
        pr.compare(&[logits.data().to_vec()], &[g.into_data()], &mut |p| {
            Ok((cross_entropy(&with(&logits, &p[0]), &labels)?.0, vec![]))
        })?,
    ));
    Ok(out)
}

fn learnable(block: &BlockParams<f64>) -> Vec<Vec<f64>> {
    let mut v = Vec::new();
    block.visit("", &mut |_, role, t| {
        if role.learnable() {
            v.push(t.data().to_vec());
        }
    });
    v
}

fn set_learnable(block: &mut BlockParams<f64>, values: &[Vec<f64>]) {
    let mut it = values.iter();
    block.visit_mut("", &mut |_, role, t| {
        if role.learnable() {
            t.data_mut()
                .copy_from_slice(it.next().expect("same layout"));
        }
    });
}

/// Training-mode check of a whole block: batch statistics and a fixed dropout mask.
fn block_check(pr: Probe, cfg: BlockConfig, x_shape: Shape, seed: u64) -> Result<Stats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = BlockParams::<f64>::new(cfg, &mut rng)?;
    block.visit_mut("", &mut |_, role, t| match role {
        TensorRole::Scale => t
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(0.5..1.5)),
        TensorRole::Shift => t
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-0.5..0.5)),
        _ => {}
    });
    let x = uniform(x_shape, -1.0, 1.0, &mut rng);
    let ctx_seed = rng.gen::<u64>();

    let (y, trace) = block.forward(&x, &mut Ctx::train(ctx_seed))?;
    let r = uniform(y.shape(), -1.0, 1.0, &mut rng);
    block.zero_grad();
    let gx = block.backward(&trace, &r)?;
    let mut analytic = vec![gx.into_data()];
    block.visit("", &mut |_, role, t| {
        if role.learnable() {
            analytic.push(t.grad().map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec));
        }
    });
    let mut point = vec![x.data().to_vec()];
    point.extend(learnable(&block));

    let mut probe = block.clone();
    pr.compare(&point, &analytic, &mut |p| {
        set_learnable(&mut probe, &p[1..]);
        let (y, t) = probe.forward(&with(&x, &p[0]), &mut Ctx::train(ctx_seed))?;
        Ok((dot(&y, &r), t.kink_pattern()))
    })
}

fn block_checks(pr: Probe, seed: u64) -> Result<Vec<(&'static str, Stats)>> {
    let normal = BlockConfig::new(4, 4, 1, 2);
    let transition = BlockConfig::new(3, 4, 2, 1);
    let max = BlockConfig {
        reduce_mode: ReduceMode::Max,
        ..normal
    };
    let attn = BlockConfig {
        combine_mode: CombineMode::SigmoidAttention,
        ..normal
    };
    let attn_t = BlockConfig {
        combine_mode: CombineMode::SigmoidAttention,
        ..transition
    };
    let s = |c, h| Shape::new(3, c, h, 7);
    Ok(vec![
        (
            "normal",
            block_check(pr, normal, s(4, 10), derive_seed(&[seed, 1]))?,
        ),
        (
            "transition",
            block_check(pr, transition, s(3, 20), derive_seed(&[seed, 2]))?,
        ),
        (
            "normal_maxpool",
            block_check(pr, max, s(4, 10), derive_seed(&[seed, 3]))?,
        ),
        (
            "normal_attention",
            block_check(pr, attn, s(4, 10), derive_seed(&[seed, 4]))?,
        ),
        (
            "transition_attention",
            block_check(pr, attn_t, s(3, 20), derive_seed(&[seed, 5]))?,
        ),
    ])
}

/// Runs every op check and every block check for each seed.
pub fn run(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut results: Vec<CheckResult> = Vec::new();
    let mut record = |kind, rows: Vec<(&'static str, Stats)>| {
        for (name, st) in rows {
            match results
                .iter_mut()
                .find(|r| r.name == name && r.kind == kind)
            {
                Some(r) => {
                    let m = Stats {
                        max: r.max_rel_err,
                        checked: r.checked,
                        skipped: r.skipped,
                    }
                    .merge(st);
                    (r.max_rel_err, r.checked, r.skipped) = (m.max, m.checked, m.skipped);
                }
                None => results.push(CheckResult {
                    name,
                    kind,
                    max_rel_err: st.max,
                    checked: st.checked,
                    skipped: st.skipped,
                }),
            }
        }
    };
    let pr = Probe {
        step: opts.step,
        stencil: opts.stencil,
    };
    for &seed in &opts.seeds {
        record(CheckKind::Op, op_checks(pr, seed, opts.fault)?);
        record(CheckKind::Block, block_checks(pr, seed)?);
    }
    Ok(GradcheckReport {
        threshold: opts.threshold,
        step: opts.step,
        stencil: opts.stencil,
        seeds: opts.seeds.len(),
        results,
    })
}
