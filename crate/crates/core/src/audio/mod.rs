//! 16 kHz waveforms, log-Mel features and training-time augmentation.

pub mod augment;
pub mod featdump;
pub mod mel;
pub mod wav;

use crate::error::{Error, Result};

pub use augment::{
    mix_background, mix_noise, random_time_shift, spec_augment, time_shift, AugmentConfig, Mask,
    MaskAxis, SpecAugmentConfig,
};
pub use featdump::{read_featdump, write_featdump};
pub use mel::{hz_to_mel, mel_to_hz, LogMelSpec, MelFrontend};
pub use wav::{read_wav, read_wav_samples, wav_len, write_wav};

pub const SAMPLE_RATE: u32 = 16_000;
/// One second at 16 kHz.
pub const CLIP_SAMPLES: usize = 16_000;

/// A one-second mono clip of samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
}

impl Waveform {
    /// Zero-pads short clips to one second and keeps the first second of long ones.
    pub fn from_samples(mut samples: Vec<f32>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Audio("empty waveform".into()));
        }
        samples.resize(CLIP_SAMPLES, 0.0);
        Ok(Self { samples })
    }

    pub fn silence() -> Self {
        Self {
            samples: vec![0.0; CLIP_SAMPLES],
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pads_and_truncates() {
        assert_eq!(
            Waveform::from_samples(vec![0.5; 10])
                .unwrap()
                .samples()
                .len(),
            CLIP_SAMPLES
        );
        let long = Waveform::from_samples(vec![0.1; 20_000]).unwrap();
        assert_eq!(long.samples().len(), CLIP_SAMPLES);
        assert!(Waveform::from_samples(Vec::new()).is_err());
    }
}
