//! Analytic parameter and multiply counts.
//!
//! Counting convention: a convolution costs `out_elements * kernel_taps * in_channels_per_group`
//! multiplies; BN and SSN cost one multiply per output element (the affine scale, with the
//! normalization folded in); activations, pooling, broadcasting, additions and dropout
//! cost nothing. Parameters are every learnable scalar: conv weights, biases where
//! present, and the (gamma, beta) pair of every norm group. Running statistics are not
//! parameters.

use serde::Serialize;

use super::{ModelConfig, STAGES};
use crate::block::BlockConfig;
use crate::error::{config_err, Result};
use crate::ops::ConvSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub name: String,
    /// (channels, frequency, time) of the layer output for one sample.
    pub output: (usize, usize, usize),
    pub params: u64,
    pub mults: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub tau: f64,
    pub frames: usize,
    pub params: u64,
    pub mults: u64,
    pub layers: Vec<LayerCost>,
}

impl CostReport {
    pub const CONVENTION: &'static str =
        "mults: conv = out_elems * taps * in_ch/groups; norm = 1 per out elem; \
         activations/pool/add/dropout = 0. params: conv weights + biases + norm gamma/beta";
}

struct Ledger {
    layers: Vec<LayerCost>,
    frames: usize,
}

impl Ledger {
    fn conv(&mut self, name: String, spec: ConvSpec, cin: usize, cout: usize, h_out: usize) {
        let out_elems = (cout * h_out * self.frames) as u64;
        let per_out = (spec.taps() * cin / spec.groups) as u64;
        let params = cout as u64 * per_out + if spec.bias { cout as u64 } else { 0 };
        self.layers.push(LayerCost {
            name,
            output: (cout, h_out, self.frames),
            params,
            mults: out_elems * per_out,
        });
    }

    /// Conv applied after the time average (one output column).
    fn conv_pooled(&mut self, name: String, spec: ConvSpec, cin: usize, cout: usize) {
        let per_out = (spec.taps() * cin / spec.groups) as u64;
        self.layers.push(LayerCost {
            name,
            output: (cout, 1, 1),
            params: cout as u64 * per_out + if spec.bias { cout as u64 } else { 0 },
            mults: cout as u64 * per_out,
        });
    }

    fn norm(&mut self, name: String, c: usize, h: usize, sub_bands: usize) {
        self.layers.push(LayerCost {
            name,
            output: (c, h, self.frames),
            params: 2 * (c * sub_bands) as u64,
            mults: (c * h * self.frames) as u64,
        });
    }

    fn block(&mut self, prefix: &str, cfg: &BlockConfig, h_in: usize) -> Result<usize> {
        let c = cfg.out_channels;
        if cfg.is_transition {
            self.conv(
                format!("{prefix}.front.conv"),
                cfg.front_spec(),
                cfg.in_channels,
                c,
                h_in,
            );
            self.norm(format!("{prefix}.front.bn"), c, h_in, 1);
        }
        let h = cfg.output_height(h_in)?;
        self.conv(format!("{prefix}.f2.conv"), cfg.f2_spec(), c, c, h);
        self.norm(format!("{prefix}.f2.ssn"), c, h, cfg.ssn_sub_bands);
        self.conv(
            format!("{prefix}.f1.conv"),
            cfg.f1_depthwise_spec(),
            c,
            c,
            1,
        );
        self.norm(format!("{prefix}.f1.bn"), c, 1, 1);
        self.conv(
            format!("{prefix}.f1.pointwise"),
            ConvSpec::pointwise(),
            c,
            c,
            1,
        );
        Ok(h)
    }
}

/// Per-layer parameter and multiply ledger for one sample of `frames` time steps.
pub fn cost_report(cfg: &ModelConfig, frames: usize) -> Result<CostReport> {
    cfg.validate()?;
    if frames == 0 {
        return Err(config_err("frames must be positive"));
    }
    let widths = cfg.widths()?;
    let mut ledger = Ledger {
        layers: Vec::new(),
        frames,
    };

    let mut h = cfg.n_mels / 2;
    ledger.conv("stem.conv".into(), cfg.stem_spec(), 1, widths.stem, h);
    ledger.norm("stem.bn".into(), widths.stem, h, 1);
    for (i, block) in cfg.block_configs()?.iter().enumerate() {
        h = ledger.block(&format!("blocks.{i}"), block, h)?;
    }
    debug_assert_eq!(STAGES.len(), 4);
    let last = widths.stages[3];
    if h < 5 {
        return Err(config_err(format!("height {h} too small for the 5x5 tail")));
    }
    h -= 4;
    ledger.conv(
        "tail.depthwise".into(),
        cfg.tail_depthwise_spec(last),
        last,
        last,
        h,
    );
    ledger.conv(
        "tail.pointwise".into(),
        cfg.head_spec(),
        last,
        widths.head,
        h,
    );
    ledger.conv_pooled(
        "classifier".into(),
        cfg.head_spec(),
        widths.head,
        cfg.n_classes,
    );

    let layers = ledger.layers;
    Ok(CostReport {
        tau: cfg.tau,
        frames,
        params: layers.iter().map(|l| l.params).sum(),
        mults: layers.iter().map(|l| l.mults).sum(),
        layers,
    })
}

pub fn count_params(cfg: &ModelConfig) -> Result<u64> {
    Ok(cost_report(cfg, cfg.frames)?.params)
}

pub fn count_mults(cfg: &ModelConfig, frames: usize) -> Result<u64> {
    Ok(cost_report(cfg, frames)?.mults)
}

impl std::fmt::Display for CostReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "# BC-ResNet-{} at W={} frames", self.tau, self.frames)?;
        writeln!(f, "# {}", Self::CONVENTION)?;
        writeln!(
            f,
            "{:<24} {:>16} {:>10} {:>12}",
            "layer", "output", "params", "mults"
        )?;
        for l in &self.layers {
            let out = format!("{}x{}x{}", l.output.0, l.output.1, l.output.2);
            writeln!(
                f,
                "{:<24} {:>16} {:>10} {:>12}",
                l.name, out, l.params, l.mults
            )?;
        }
        write!(
            f,
            "total params {} ({:.1}k), mults {} ({:.2}M)",
            self.params,
            self.params as f64 / 1e3,
            self.mults,
            self.mults as f64 / 1e6
        )
    }
}
