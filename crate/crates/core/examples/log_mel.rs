//! Computes the 40 x 98 log-Mel spectrogram of a WAV file (or a synthetic chirp) and
//! writes it in the featdump format.
//!
//! ```text
//! cargo run --example log_mel -- input.wav features.bin
//! ```

use std::fs::File;
use std::io::BufWriter;

use bcresnet::audio::{
    read_featdump, read_wav, write_featdump, MelFrontend, Waveform, CLIP_SAMPLES, SAMPLE_RATE,
};

fn chirp() -> Waveform {
    let sr = SAMPLE_RATE as f64;
    let samples = (0..CLIP_SAMPLES)
        .map(|i| {
            let t = i as f64 / sr;
            (0.5 * (2.0 * std::f64::consts::PI * (200.0 * t + 1900.0 * t * t)).sin()) as f32
        })
        .collect();
    Waveform::from_samples(samples).expect("one second")
}

fn main() -> bcresnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let wave = match args.next() {
        Some(path) => read_wav(path)?,
        None => chirp(),
    };
    let frontend = MelFrontend::new();
    let spec = frontend.log_mel(&wave);
    println!("{} mel bands x {} frames", spec.n_mels(), spec.frames());

    // loudest band per tenth of a second
    for frame in (0..spec.frames()).step_by(10) {
        let (band, value) =
            (0..spec.n_mels())
                .map(|m| (m, spec.get(m, frame)))
                .fold(
                    (0, f32::MIN),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        println!(
            "frame {frame:>2}: band {band:>2} ({:>6.0} Hz) {value:>7.2}",
            frontend.centers_hz()[band]
        );
    }

    if let Some(out) = args.next() {
        write_featdump(&spec, BufWriter::new(File::create(&out)?))?;
        let back = read_featdump(File::open(&out)?)?;
        println!("wrote {out}, round trip exact: {}", back == spec);
    }
    Ok(())
}
