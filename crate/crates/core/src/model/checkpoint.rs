//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "BCRK"  u32 version  u32 config_len  config_json
//! u64 step  u32 entry_count
//! entry_count x { u32 name_len  name  u8 role  4 x u32 dims  u64 offset  u64 len }
//! u64 value_count  value_count x f32
//! u32 crc32 of every preceding byte
//! ```
//!
//! Offsets and lengths count f32 values into the blob. Running norm statistics are
//! stored as ordinary entries.

use std::fs;
use std::path::Path;

use rand::SeedableRng;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::nn::{Module, TensorRole};
use crate::tensor::Shape;

pub const MAGIC: &[u8; 4] = b"BCRK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams<f32>,
    /// Optimizer steps taken when the checkpoint was written.
    pub step: u64,
}

fn role_code(role: TensorRole) -> u8 {
    match role {
        TensorRole::Weight => 0,
        TensorRole::Bias => 1,
        TensorRole::Scale => 2,
        TensorRole::Shift => 3,
        TensorRole::RunningMean => 4,
        TensorRole::RunningVar => 5,
    }
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let config = serde_json::to_vec(&ckpt.model.cfg)?;
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&ckpt.step.to_le_bytes());

    let mut entries = Vec::new();
    let mut blob: Vec<f32> = Vec::new();
    ckpt.model.visit("", &mut |name, role, t| {
        entries.push((
            name.to_string(),
            role,
            t.shape(),
            blob.len() as u64,
            t.len() as u64,
        ));
        blob.extend_from_slice(t.data());
    });
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, role, shape, offset, len) in &entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(role_code(*role));
        for d in shape.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
    }
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    for v in &blob {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    // Write-then-rename so a crash never leaves a half-written checkpoint in place.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(ckpt)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("unexpected end of data at byte {}", self.pos)),
        }
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let fail = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < MAGIC.len() + 8 {
        return Err(fail(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail("bad magic, not a BCRK checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            stored,
            computed,
        });
    }

    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32().map_err(fail)?;
    if version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    let config_len = r.u32().map_err(fail)? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.take(config_len).map_err(fail)?)?;
    let step = r.u64().map_err(fail)?;
    let count = r.u32().map_err(fail)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u32().map_err(fail)? as usize;
        let name = String::from_utf8(r.take(n).map_err(fail)?.to_vec())
            .map_err(|e| fail(format!("entry name: {e}")))?;
        let role = r.take(1).map_err(fail)?[0];
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32().map_err(fail)? as usize;
        }
        let offset = r.u64().map_err(fail)? as usize;
        let len = r.u64().map_err(fail)? as usize;
        entries.push((
            name,
            role,
            Shape::new(dims[0], dims[1], dims[2], dims[3]),
            offset,
            len,
        ));
    }
    let values = r.u64().map_err(fail)? as usize;
    let raw = r
        .take(
            values
                .checked_mul(4)
                .ok_or_else(|| fail("blob size overflow".into()))?,
        )
        .map_err(fail)?;
    let blob: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if r.pos != body.len() {
        return Err(fail(format!("{} trailing bytes", body.len() - r.pos)));
    }

    let mut model =
        ModelParams::<f32>::build(cfg, &mut rand_chacha::ChaCha8Rng::from_seed([0; 32]))?;
    let mut expected = 0usize;
    model.visit("", &mut |_, _, _| expected += 1);
    if expected != entries.len() {
        return Err(fail(format!(
            "{} entries stored, model has {expected} tensors",
            entries.len()
        )));
    }
    let mut problem = None;
    let mut it = entries.into_iter();
    model.visit_mut("", &mut |name, role, t| {
        if problem.is_some() {
            return;
        }
        let (stored_name, stored_role, shape, offset, len) = it.next().expect("count checked");
        if stored_name != name || stored_role != role_code(role) || shape != t.shape() {
            problem = Some(format!(
                "entry {stored_name} {shape} does not match model tensor {name} {}",
                t.shape()
            ));
            return;
        }
        match blob.get(offset..offset + len) {
            Some(src) if len == t.len() => t.data_mut().copy_from_slice(src),
            _ => problem = Some(format!("entry {name} points outside the blob")),
        }
    });
    if let Some(p) = problem {
        return Err(fail(p));
    }
    Ok(Checkpoint { model, step })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode(&fs::read(path)?, path)
}

/// Loads and checks that the stored configuration equals `expected`.
pub fn load_checkpoint_expecting(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    let got = &ckpt.model.cfg;
    if got.tau != expected.tau {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint has tau {}, requested tau {}",
            got.tau, expected.tau
        )));
    }
    if got != expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint config {got:?} differs from requested {expected:?}"
        )));
    }
    Ok(ckpt)
}
