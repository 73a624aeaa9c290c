use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::manifest::Manifest;
use super::{Example, Source};
use crate::audio::augment::{mix_background, random_time_shift, spec_augment, AugmentConfig};
use crate::audio::wav::{read_wav, read_wav_samples};
use crate::audio::{LogMelSpec, MelFrontend, Waveform, CLIP_SAMPLES};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tensor::{Shape, Tensor};

/// Resolves example sources to waveforms and holds background noise in memory.
#[derive(Debug, Clone, Default)]
pub struct AudioStore {
    pub background: Vec<Vec<f32>>,
}

impl AudioStore {
    pub fn new(background: Vec<Vec<f32>>) -> Self {
        Self { background }
    }

    /// Loads every background clip listed in a manifest.
    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let background = m
            .background
            .iter()
            .map(|c| read_wav_samples(&c.path))
            .collect::<Result<_>>()?;
        Ok(Self { background })
    }

    pub fn waveform(&self, ex: &Example) -> Result<Waveform> {
        match &ex.source {
            Source::File(p) => read_wav(p),
            Source::Samples(s) => Waveform::from_samples(s.as_ref().clone()),
            Source::Silence(spec) => match spec.clip {
                None => Ok(Waveform::silence()),
                Some(i) => {
                    let clip = self.background.get(i).ok_or_else(|| {
                        Error::Dataset(format!("silence refers to missing background clip {i}"))
                    })?;
                    let crop = clip
                        .get(spec.offset..spec.offset + CLIP_SAMPLES)
                        .ok_or_else(|| Error::Dataset("silence crop outside its clip".into()))?;
                    Waveform::from_samples(crop.iter().map(|&s| s * spec.gain).collect())
                }
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// (batch, 1, 40, frames)
    pub features: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Positions of these examples in the loader's example list.
    pub indices: Vec<usize>,
}

/// Produces log-Mel batches from a list of examples. Training loaders shuffle per epoch
/// and run time shift, noise mixing, log-Mel and SpecAugment; eval loaders keep order and
/// only compute log-Mel. Every utterance draws from its own stream seeded by
/// (seed, epoch, position), so output does not depend on thread count.
#[derive(Debug, Clone)]
pub struct BatchLoader {
    examples: Arc<Vec<Example>>,
    store: Arc<AudioStore>,
    frontend: MelFrontend,
    augment: Option<AugmentConfig>,
    batch_size: usize,
    seed: u64,
}

impl BatchLoader {
    pub fn train(
        examples: Vec<Example>,
        store: Arc<AudioStore>,
        augment: AugmentConfig,
        batch_size: usize,
        seed: u64,
    ) -> Self {
        Self {
            examples: Arc::new(examples),
            store,
            frontend: MelFrontend::new(),
            augment: Some(augment),
            batch_size: batch_size.max(1),
            seed,
        }
    }

    pub fn eval(examples: Vec<Example>, store: Arc<AudioStore>, batch_size: usize) -> Self {
        Self {
            examples: Arc::new(examples),
            store,
            frontend: MelFrontend::new(),
            augment: None,
            batch_size: batch_size.max(1),
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn num_batches(&self) -> usize {
        self.examples.len().div_ceil(self.batch_size)
    }

    pub fn is_training(&self) -> bool {
        self.augment.is_some()
    }

    /// Example order for an epoch.
    pub fn order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        if self.augment.is_some() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, epoch]));
            order.shuffle(&mut rng);
        }
        order
    }

    pub fn features(&self, index: usize, epoch: u64) -> Result<LogMelSpec> {
        let ex = &self.examples[index];
        let w = self.store.waveform(ex)?;
        let Some(aug) = &self.augment else {
            return Ok(self.frontend.log_mel(&w));
        };
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, epoch, index as u64, 0xa0d1]));
        let w = random_time_shift(&w, aug.max_shift_ms, &mut rng)?;
        let w = mix_background(
            &w,
            &self.store.background,
            aug.noise_prob,
            aug.max_noise_gain,
            &mut rng,
        )?;
        let spec = self.frontend.log_mel(&w);
        Ok(spec_augment(&spec, &aug.spec_augment, &mut rng).0)
    }

    fn batch(&self, indices: &[usize], epoch: u64) -> Result<Batch> {
        let specs = indices
            .par_iter()
            .map(|&i| self.features(i, epoch))
            .collect::<Result<Vec<_>>>()?;
        let (rows, cols) = (specs[0].n_mels(), specs[0].frames());
        let mut data = Vec::with_capacity(specs.len() * rows * cols);
        for s in &specs {
            data.extend_from_slice(s.values());
        }
        Ok(Batch {
            features: Tensor::from_vec(Shape::new(specs.len(), 1, rows, cols), data)?,
            labels: indices.iter().map(|&i| self.examples[i].label).collect(),
            indices: indices.to_vec(),
        })
    }

    /// Batches of one epoch, in order; the last one may be short.
    pub fn epoch(&self, epoch: u64) -> impl Iterator<Item = Result<Batch>> + '_ {
        let order = self.order(epoch);
        let chunks: Vec<Vec<usize>> = order
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect();
        chunks.into_iter().map(move |c| self.batch(&c, epoch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::micro_fixture;

    fn loader(train: bool, n: usize) -> BatchLoader {
        let c = micro_fixture(3);
        let ex: Vec<Example> = c.train.into_iter().cycle().take(n).collect();
        let store = Arc::new(AudioStore::new(c.background));
        if train {
            BatchLoader::train(ex, store, AugmentConfig::for_tau(2.0), 100, 11)
        } else {
            BatchLoader::eval(ex, store, 100)
        }
    }

    #[test]
    fn partition_sizes() {
        let l = loader(false, 250);
        let sizes: Vec<usize> = l.epoch(0).map(|b| b.unwrap().labels.len()).collect();
        assert_eq!(sizes, [100, 100, 50]);
    }

    #[test]
    fn eval_is_repeatable() {
        let l = loader(false, 120);
        let a: Vec<_> = l.epoch(0).map(|b| b.unwrap()).collect();
        let b: Vec<_> = l.epoch(5).map(|b| b.unwrap()).collect();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.features, y.features);
            assert_eq!(x.labels, y.labels);
        }
        assert_eq!(a[0].features.shape(), Shape::new(100, 1, 40, 98));
    }

    #[test]
    fn shuffles_differ_by_epoch() {
        let l = loader(true, 120);
        assert_ne!(l.order(0), l.order(1));
        assert_eq!(l.order(1), l.order(1));
        let mut sorted = l.order(0);
        sorted.sort_unstable();
        assert_eq!(sorted, (0..120).collect::<Vec<_>>());
    }

    #[test]
    fn training_features_are_reproducible() {
        let l = loader(true, 8);
        assert_eq!(l.features(3, 2).unwrap(), l.features(3, 2).unwrap());
        assert_ne!(l.features(3, 2).unwrap(), l.features(3, 4).unwrap());
    }
}
