//! 40-bin log-Mel spectrogram: 30 ms Hann frames (480 samples), 10 ms hop (160), 512-point
//! FFT magnitude, triangular HTK-Mel filters over 20 Hz - 8 kHz, natural log with a floor.

use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{config_err, Result};
use crate::tensor::{Shape, Tensor};

pub const N_MELS: usize = 40;
pub const WIN_LENGTH: usize = 480;
pub const HOP_LENGTH: usize = 160;
pub const N_FFT: usize = 512;
pub const F_MIN: f64 = 20.0;
pub const F_MAX: f64 = 8_000.0;
pub const LOG_FLOOR: f32 = 1e-6;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Frequency-by-time log-Mel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpec {
    n_mels: usize,
    frames: usize,
    values: Vec<f32>,
}

impl LogMelSpec {
    pub fn from_values(n_mels: usize, frames: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n_mels * frames {
            return Err(config_err(format!(
                "{n_mels}x{frames} spectrogram needs {} values, got {}",
                n_mels * frames,
                values.len()
            )));
        }
        Ok(Self {
            n_mels,
            frames,
            values,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.frames + frame]
    }

    pub fn row(&self, mel: usize) -> &[f32] {
        &self.values[mel * self.frames..][..self.frames]
    }

    /// As a (1, 1, n_mels, frames) tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(
            Shape::new(1, 1, self.n_mels, self.frames),
            self.values.clone(),
        )
        .expect("length checked at construction")
    }
}

/// Precomputed window, filterbank and FFT plan. Cheap to share across threads.
#[derive(Clone)]
pub struct MelFrontend {
    window: Vec<f32>,
    /// `N_MELS` rows of `N_FFT / 2 + 1` weights.
    filters: Vec<Vec<f32>>,
    centers_hz: Vec<f64>,
    fft: Arc<dyn Fft<f32>>,
}

impl std::fmt::Debug for MelFrontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFrontend")
            .field("n_mels", &self.filters.len())
            .field("n_fft", &N_FFT)
            .finish()
    }
}

impl Default for MelFrontend {
    fn default() -> Self {
        Self::new()
    }
}

impl MelFrontend {
    pub fn new() -> Self {
        // periodic Hann
        let window = (0..WIN_LENGTH)
            .map(|i| {
                let x = 2.0 * std::f64::consts::PI * i as f64 / WIN_LENGTH as f64;
                (0.5 - 0.5 * x.cos()) as f32
            })
            .collect();

        let (lo, hi) = (hz_to_mel(F_MIN), hz_to_mel(F_MAX));
        let edges: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MELS + 1) as f64))
            .collect();
        let bins = N_FFT / 2 + 1;
        let filters = (0..N_MELS)
            .map(|m| {
                let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * SAMPLE_RATE as f64 / N_FFT as f64;
                        let up = (f - left) / (center - left);
                        let down = (right - f) / (right - center);
                        up.min(down).max(0.0) as f32
                    })
                    .collect()
            })
            .collect();

        Self {
            window,
            filters,
            centers_hz: edges[1..=N_MELS].to_vec(),
            fft: FftPlanner::new().plan_fft_forward(N_FFT),
        }
    }

    pub fn filters(&self) -> &[Vec<f32>] {
        &self.filters
    }

    /// Center frequency of each Mel filter in Hz.
    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn frame_count(samples: usize) -> usize {
        if samples < WIN_LENGTH {
            0
        } else {
            1 + (samples - WIN_LENGTH) / HOP_LENGTH
        }
    }

    pub fn log_mel(&self, w: &Waveform) -> LogMelSpec {
        let samples = w.samples();
        let frames = Self::frame_count(samples.len());
        let bins = N_FFT / 2 + 1;
        let mut values = vec![0f32; N_MELS * frames];
        let mut buf = vec![Complex32::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex32::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0f32; bins];
        for t in 0..frames {
            let frame = &samples[t * HOP_LENGTH..][..WIN_LENGTH];
            for (i, z) in buf.iter_mut().enumerate() {
                *z = match frame.get(i) {
                    Some(&s) => Complex32::new(s * self.window[i], 0.0),
                    None => Complex32::new(0.0, 0.0),
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, z) in mag.iter_mut().zip(&buf) {
                *m = z.norm();
            }
            for (mel, filt) in self.filters.iter().enumerate() {
                let e: f32 = filt.iter().zip(&mag).map(|(a, b)| a * b).sum();
                values[mel * frames + t] = e.max(LOG_FLOOR).ln();
            }
        }
        LogMelSpec {
            n_mels: N_MELS,
            frames,
            values,
        }
    }
}
