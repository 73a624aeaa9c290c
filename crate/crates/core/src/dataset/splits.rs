use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loader::AudioStore;
use super::manifest::{load_manifest, Version};
use super::micro::{micro_fixture, MicroCorpus};
use super::rebalance::rebalance;
use super::{Example, Split, N_CLASSES};
use crate::error::{Error, Result};

/// Where examples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// The synthetic four-class corpus.
    Micro,
    SpeechCommands {
        root: PathBuf,
        version: Version,
    },
}

impl DatasetSource {
    /// `micro` or a dataset directory.
    pub fn parse(spec: &str, version: Version) -> Result<Self> {
        if spec == "micro" {
            return Ok(Self::Micro);
        }
        let root = PathBuf::from(spec);
        if !root.is_dir() {
            return Err(Error::Dataset(format!(
                "dataset directory {} not found",
                root.display()
            )));
        }
        Ok(Self::SpeechCommands { root, version })
    }
}

/// All three splits plus the audio they refer to.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    pub store: Arc<AudioStore>,
    pub n_classes: usize,
}

impl Splits {
    /// Builds the splits. The seed drives the micro corpus or the rebalancing draw.
    pub fn open(source: &DatasetSource, seed: u64) -> Result<Self> {
        match source {
            DatasetSource::Micro => {
                let c = micro_fixture(seed);
                Ok(Self {
                    train: c.train,
                    val: c.val,
                    test: c.test,
                    store: Arc::new(AudioStore::new(c.background)),
                    n_classes: MicroCorpus::N_CLASSES,
                })
            }
            DatasetSource::SpeechCommands { root, version } => {
                let raw = load_manifest(root, *version)?;
                let m = rebalance(&raw, &mut ChaCha8Rng::seed_from_u64(seed))?;
                Ok(Self {
                    train: m.examples(Split::Train),
                    val: m.examples(Split::Val),
                    test: m.examples(Split::Test),
                    store: Arc::new(AudioStore::from_manifest(&m)?),
                    n_classes: N_CLASSES,
                })
            }
        }
    }

    pub fn get(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}
