//! Speech Commands manifests, 12-class relabeling with rebalancing, a synthetic micro
//! corpus, and the batch loader that turns examples into log-Mel batches.

pub mod loader;
pub mod manifest;
pub mod micro;
pub mod rebalance;
pub mod splits;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use loader::{AudioStore, Batch, BatchLoader};
pub use manifest::{load_manifest, Entry, Manifest, Version};
pub use micro::{micro_fixture, MicroCorpus};
pub use rebalance::{make_silence, rebalance};
pub use splits::{DatasetSource, Splits};

/// The ten keyword classes, in label order.
pub const KEYWORDS: [&str; 10] = [
    "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go",
];
pub const UNKNOWN: usize = 10;
pub const SILENCE: usize = 11;
pub const N_CLASSES: usize = 12;
pub const SILENCE_WORD: &str = "_silence_";
pub const BACKGROUND_DIR: &str = "_background_noise_";

/// Class index of a raw word: keywords map to 0..10, `_silence_` to 11, anything else
/// to unknown.
pub fn label_for_word(word: &str) -> usize {
    if word == SILENCE_WORD {
        return SILENCE;
    }
    KEYWORDS
        .iter()
        .position(|k| k.eq_ignore_ascii_case(word))
        .unwrap_or(UNKNOWN)
}

pub fn class_name(label: usize) -> &'static str {
    match label {
        UNKNOWN => "_unknown_",
        SILENCE => SILENCE_WORD,
        k => KEYWORDS.get(k).copied().unwrap_or("?"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl std::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" | "validation" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            _ => Err(crate::Error::Dataset(format!("unknown split {s:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        })
    }
}

/// A synthetic silence clip: a crop of background clip `clip` scaled by `gain`, or all
/// zeros when `clip` is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilenceSpec {
    pub clip: Option<usize>,
    pub offset: usize,
    pub gain: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// WAV file path.
    File(PathBuf),
    Silence(SilenceSpec),
    /// In-memory samples (synthetic corpora).
    Samples(Arc<Vec<f32>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub source: Source,
    pub label: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabeling() {
        assert_eq!(label_for_word("yes"), 0);
        assert_eq!(label_for_word("go"), 9);
        assert_eq!(label_for_word("bed"), UNKNOWN);
        assert_eq!(label_for_word("_silence_"), SILENCE);
        assert_eq!(class_name(3), "down");
    }
}
