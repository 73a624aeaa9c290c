use std::path::Path;

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Reads a mono 16-bit PCM WAV at 16 kHz. Anything else is rejected.
pub fn read_wav_samples(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.sample_rate != SAMPLE_RATE
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::Audio(format!(
            "{}: need mono 16-bit PCM at {SAMPLE_RATE} Hz, got {} ch, {} bit {:?} at {} Hz",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format,
            spec.sample_rate
        )));
    }
    reader
        .into_samples::<i16>()
        .map(|s| Ok(f32::from(s?) / 32768.0))
        .collect()
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    Waveform::from_samples(read_wav_samples(path)?)
}

/// Number of samples in a WAV file, read from the header only.
pub fn wav_len(path: impl AsRef<Path>) -> Result<usize> {
    Ok(hound::WavReader::open(path)?.duration() as usize)
}

pub fn write_wav(path: impl AsRef<Path>, samples: &[f32]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}
