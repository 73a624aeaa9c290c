//! Spectrogram dump: two little-endian u32 (rows, cols) then rows*cols little-endian f32.

use std::io::{Read, Write};

use super::LogMelSpec;
use crate::error::{Error, Result};

pub fn write_featdump<W: Write>(spec: &LogMelSpec, mut out: W) -> Result<()> {
    out.write_all(&(spec.n_mels() as u32).to_le_bytes())?;
    out.write_all(&(spec.frames() as u32).to_le_bytes())?;
    for v in spec.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_featdump<R: Read>(mut input: R) -> Result<LogMelSpec> {
    let mut header = [0u8; 8];
    input.read_exact(&mut header)?;
    let rows = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(header[4..].try_into().expect("4 bytes")) as usize;
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() != rows * cols * 4 {
        return Err(Error::Audio(format!(
            "featdump header says {rows}x{cols}, body has {} bytes",
            raw.len()
        )));
    }
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    LogMelSpec::from_values(rows, cols, values)
}
