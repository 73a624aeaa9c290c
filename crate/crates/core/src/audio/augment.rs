//! Time shift, background-noise mixing and SpecAugment-style masking (no time warp).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LogMelSpec, Waveform, CLIP_SAMPLES, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const MAX_SHIFT_MS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecAugmentConfig {
    pub enabled: bool,
    /// Maximum frequency-mask width F.
    pub freq_param: usize,
    /// Maximum time-mask width T.
    pub time_param: usize,
    pub freq_masks: usize,
    pub time_masks: usize,
}

impl SpecAugmentConfig {
    pub const fn disabled() -> Self {
        Self {
            enabled: false,
            freq_param: 0,
            time_param: 20,
            freq_masks: 2,
            time_masks: 2,
        }
    }

    pub const fn with_freq_param(freq_param: usize) -> Self {
        Self {
            enabled: true,
            freq_param,
            ..Self::disabled()
        }
    }

    /// Frequency-mask defaults per width multiplier: off for τ < 1.5, then F = 1, 3, 5, 7
    /// at τ = 1.5, 2, 3, 6 and above.
    pub fn for_tau(tau: f64) -> Self {
        const TABLE: [(f64, usize); 4] = [(6.0, 7), (3.0, 5), (2.0, 3), (1.5, 1)];
        TABLE
            .iter()
            .find(|(t, _)| tau >= *t)
            .map_or(Self::disabled(), |&(_, f)| Self::with_freq_param(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub max_shift_ms: f64,
    pub noise_prob: f64,
    /// Noise gain is drawn uniformly from `[0, max_noise_gain]`.
    pub max_noise_gain: f64,
    pub spec_augment: SpecAugmentConfig,
}

impl AugmentConfig {
    pub fn for_tau(tau: f64) -> Self {
        Self {
            max_shift_ms: MAX_SHIFT_MS,
            noise_prob: 0.8,
            max_noise_gain: 0.1,
            spec_augment: SpecAugmentConfig::for_tau(tau),
        }
    }

    pub fn none() -> Self {
        Self {
            max_shift_ms: 0.0,
            noise_prob: 0.0,
            max_noise_gain: 0.0,
            spec_augment: SpecAugmentConfig::disabled(),
        }
    }
}

/// Delays (positive) or advances (negative) the clip by `round(shift_ms * 16)` samples,
/// zero-filling the vacated end.
pub fn time_shift(w: &Waveform, shift_ms: f64) -> Result<Waveform> {
    if !(shift_ms.abs() <= MAX_SHIFT_MS) {
        return Err(Error::Audio(format!(
            "time shift {shift_ms} ms outside ±{MAX_SHIFT_MS} ms"
        )));
    }
    let shift = (shift_ms * SAMPLE_RATE as f64 / 1000.0).round() as isize;
    let src = w.samples();
    let n = src.len() as isize;
    let out = (0..n)
        .map(|i| {
            let j = i - shift;
            if (0..n).contains(&j) {
                src[j as usize]
            } else {
                0.0
            }
        })
        .collect();
    Waveform::from_samples(out)
}

pub fn random_time_shift<R: Rng + ?Sized>(
    w: &Waveform,
    max_ms: f64,
    rng: &mut R,
) -> Result<Waveform> {
    if max_ms <= 0.0 {
        return Ok(w.clone());
    }
    time_shift(w, rng.gen_range(-max_ms..=max_ms))
}

/// `clip(w + alpha * noise, -1, 1)` with `noise` a one-second crop.
pub fn mix_noise(w: &Waveform, noise: &[f32], alpha: f32) -> Waveform {
    let samples = w
        .samples()
        .iter()
        .zip(noise.iter().chain(std::iter::repeat(&0.0)))
        .map(|(&s, &n)| (s + alpha * n).clamp(-1.0, 1.0))
        .collect();
    Waveform::from_samples(samples).expect("non-empty clip")
}

/// With probability `prob`, mixes a random one-second crop of a random clip at a gain
/// drawn from `[0, max_gain]`.
pub fn mix_background<R: Rng + ?Sized>(
    w: &Waveform,
    clips: &[Vec<f32>],
    prob: f64,
    max_gain: f64,
    rng: &mut R,
) -> Result<Waveform> {
    if clips.is_empty() {
        if prob > 0.0 {
            log::warn!("no background noise clips available; skipping noise mixing");
        }
        return Ok(w.clone());
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Audio(format!(
            "noise probability {prob} outside [0, 1]"
        )));
    }
    if !(rng.gen::<f64>() < prob) {
        return Ok(w.clone());
    }
    let clip = &clips[rng.gen_range(0..clips.len())];
    if clip.len() < CLIP_SAMPLES {
        return Err(Error::Audio(format!(
            "background clip of {} samples is shorter than one second",
            clip.len()
        )));
    }
    let offset = rng.gen_range(0..=clip.len() - CLIP_SAMPLES);
    let alpha = rng.gen_range(0.0..=max_gain) as f32;
    Ok(mix_noise(w, &clip[offset..offset + CLIP_SAMPLES], alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskAxis {
    Frequency,
    Time,
}

/// A band of `width` rows (frequency) or columns (time) starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub axis: MaskAxis,
    pub start: usize,
    pub width: usize,
}

pub fn draw_masks<R: Rng + ?Sized>(
    cfg: &SpecAugmentConfig,
    n_mels: usize,
    frames: usize,
    rng: &mut R,
) -> Vec<Mask> {
    if !cfg.enabled {
        return Vec::new();
    }
    let mut draw = |axis, param: usize, len: usize| {
        let width = rng.gen_range(0..=param.min(len));
        let start = rng.gen_range(0..=len - width);
        Mask { axis, start, width }
    };
    let mut masks = Vec::with_capacity(cfg.freq_masks + cfg.time_masks);
    for _ in 0..cfg.freq_masks {
        masks.push(draw(MaskAxis::Frequency, cfg.freq_param, n_mels));
    }
    for _ in 0..cfg.time_masks {
        masks.push(draw(MaskAxis::Time, cfg.time_param, frames));
    }
    masks
}

/// Sets every masked cell to zero.
pub fn apply_masks(spec: &mut LogMelSpec, masks: &[Mask]) {
    let (rows, cols) = (spec.n_mels(), spec.frames());
    let values = spec.values_mut();
    for m in masks {
        match m.axis {
            MaskAxis::Frequency => {
                for r in m.start..(m.start + m.width).min(rows) {
                    values[r * cols..(r + 1) * cols].fill(0.0);
                }
            }
            MaskAxis::Time => {
                for r in 0..rows {
                    let end = (m.start + m.width).min(cols);
                    if m.start < end {
                        values[r * cols + m.start..r * cols + end].fill(0.0);
                    }
                }
            }
        }
    }
}

pub fn spec_augment<R: Rng + ?Sized>(
    spec: &LogMelSpec,
    cfg: &SpecAugmentConfig,
    rng: &mut R,
) -> (LogMelSpec, Vec<Mask>) {
    let masks = draw_masks(cfg, spec.n_mels(), spec.frames(), rng);
    let mut out = spec.clone();
    apply_masks(&mut out, &masks);
    (out, masks)
}
