use rand::seq::index;
use rand::Rng;

use super::manifest::{Entry, Manifest};
use super::{Example, SilenceSpec, Source, Split, KEYWORDS, SILENCE, SILENCE_WORD, UNKNOWN};
use crate::audio::CLIP_SAMPLES;
use crate::error::{Error, Result};

/// Probability that a synthesized silence example is pure zeros.
pub const ZERO_SILENCE_PROB: f64 = 0.1;

/// `count` silence examples. Each is a random one-second crop of a random background
/// clip (given by length in samples) scaled by a gain in [0, 1], or all zeros with
/// probability 0.1. Without usable clips every example is all zeros.
pub fn make_silence<R: Rng + ?Sized>(
    clip_lens: &[usize],
    count: usize,
    rng: &mut R,
) -> Vec<Example> {
    let usable: Vec<usize> = (0..clip_lens.len())
        .filter(|&i| clip_lens[i] >= CLIP_SAMPLES)
        .collect();
    if usable.is_empty() && count > 0 {
        log::warn!("no background clip of at least one second; silence examples are all zeros");
    }
    (0..count)
        .map(|_| {
            let spec = if usable.is_empty() || rng.gen::<f64>() < ZERO_SILENCE_PROB {
                SilenceSpec {
                    clip: None,
                    offset: 0,
                    gain: 0.0,
                }
            } else {
                let clip = usable[rng.gen_range(0..usable.len())];
                SilenceSpec {
                    clip: Some(clip),
                    offset: rng.gen_range(0..=clip_lens[clip] - CLIP_SAMPLES),
                    gain: rng.gen_range(0.0..=1.0),
                }
            };
            Example {
                source: Source::Silence(spec),
                label: SILENCE,
            }
        })
        .collect()
}

/// Rebalances the training and validation splits: unknown-word examples are subsampled
/// (seeded, without replacement) to the mean count of the keyword classes present, rounded
/// to the nearest integer, and the same number of silence examples is synthesized. The test split is
/// left as shipped.
pub fn rebalance<R: Rng + ?Sized>(manifest: &Manifest, rng: &mut R) -> Result<Manifest> {
    let clip_lens: Vec<usize> = manifest.background.iter().map(|c| c.len).collect();
    let mut entries: Vec<Entry> = manifest.split(Split::Test).cloned().collect();

    for split in [Split::Train, Split::Val] {
        let counts = manifest.class_counts(split);
        let keyword_total: usize = counts[..KEYWORDS.len()].iter().sum();
        if keyword_total == 0 {
            if split == Split::Train {
                return Err(Error::Dataset(
                    "training split has no keyword examples".into(),
                ));
            }
            entries.extend(manifest.split(split).cloned());
            continue;
        }
        let present = counts[..KEYWORDS.len()].iter().filter(|&&c| c > 0).count();
        let target = (keyword_total as f64 / present as f64).round() as usize;

        let unknown: Vec<&Entry> = manifest
            .split(split)
            .filter(|e| e.label() == UNKNOWN)
            .collect();
        let keep: Vec<usize> = if unknown.len() <= target {
            if unknown.len() < target {
                log::warn!(
                    "{split}: only {} unknown examples for a target of {target}; keeping all",
                    unknown.len()
                );
            }
            (0..unknown.len()).collect()
        } else {
            let mut picked = index::sample(rng, unknown.len(), target).into_vec();
            picked.sort_unstable();
            picked
        };

        entries.extend(
            manifest
                .split(split)
                .filter(|e| e.label() < KEYWORDS.len())
                .cloned(),
        );
        entries.extend(keep.into_iter().map(|i| unknown[i].clone()));
        entries.extend(
            make_silence(&clip_lens, target, rng)
                .into_iter()
                .map(|ex| Entry {
                    source: ex.source,
                    word: SILENCE_WORD.to_string(),
                    split,
                }),
        );
    }

    Ok(Manifest {
        entries,
        ..manifest.clone()
    })
}
