use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{label_for_word, Example, SilenceSpec, Source, Split, BACKGROUND_DIR, SILENCE_WORD};
use crate::audio::wav::wav_len;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Version {
    V1,
    V2,
}

impl std::str::FromStr for Version {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v1" | "1" => Ok(Self::V1),
            "v2" | "2" => Ok(Self::V2),
            _ => Err(Error::Dataset(format!("unknown dataset version {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub source: Source,
    /// Raw folder word, or `_silence_` for synthesized silence.
    pub word: String,
    pub split: Split,
}

impl Entry {
    pub fn label(&self) -> usize {
        label_for_word(&self.word)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundClip {
    pub path: PathBuf,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub version: Version,
    pub root: PathBuf,
    pub entries: Vec<Entry>,
    pub background: Vec<BackgroundClip>,
}

fn read_list(root: &Path, name: &str) -> Result<HashSet<String>> {
    let path = root.join(name);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Dataset(format!("cannot read split list {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    out.sort();
    Ok(out)
}

fn is_wav(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Scans a Speech Commands root: one folder per word, `_background_noise_`, and the
/// `validation_list.txt` / `testing_list.txt` files. Files in neither list are training data.
pub fn load_manifest(root: impl AsRef<Path>, version: Version) -> Result<Manifest> {
    let root = root.as_ref();
    let val = read_list(root, "validation_list.txt")?;
    let test = read_list(root, "testing_list.txt")?;

    let mut entries = Vec::new();
    for dir in sorted_dir(root)? {
        if !dir.is_dir() {
            continue;
        }
        let word = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_owned();
        if word.starts_with('_') {
            continue;
        }
        for file in sorted_dir(&dir)? {
            if !is_wav(&file) {
                continue;
            }
            let name = file
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            let rel = format!("{word}/{name}");
            let split = if test.contains(&rel) {
                Split::Test
            } else if val.contains(&rel) {
                Split::Val
            } else {
                Split::Train
            };
            entries.push(Entry {
                source: Source::File(PathBuf::from(rel)),
                word: word.clone(),
                split,
            });
        }
    }
    for split in Split::ALL {
        if !entries.iter().any(|e| e.split == split) {
            return Err(Error::Dataset(format!(
                "{}: {split} split is empty",
                root.display()
            )));
        }
    }

    Ok(Manifest {
        version,
        root: root.to_path_buf(),
        entries,
        background: scan_background(root)?,
    })
}

fn scan_background(root: &Path) -> Result<Vec<BackgroundClip>> {
    let dir = root.join(BACKGROUND_DIR);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    sorted_dir(&dir)?
        .into_iter()
        .filter(|p| is_wav(p))
        .map(|path| {
            Ok(BackgroundClip {
                len: wav_len(&path)?,
                path,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    path: String,
    label: String,
    split: Split,
}

fn encode_source(source: &Source) -> Result<String> {
    match source {
        Source::File(p) => Ok(p.to_string_lossy().into_owned()),
        Source::Silence(s) => Ok(format!(
            "{SILENCE_WORD}/{}/{}/{}",
            s.clip.map_or("-".to_string(), |c| c.to_string()),
            s.offset,
            s.gain
        )),
        Source::Samples(_) => Err(Error::Dataset(
            "in-memory examples cannot be exported to a manifest".into(),
        )),
    }
}

fn decode_source(path: &str) -> Result<Source> {
    let Some(rest) = path
        .strip_prefix(SILENCE_WORD)
        .and_then(|r| r.strip_prefix('/'))
    else {
        return Ok(Source::File(PathBuf::from(path)));
    };
    let bad = || Error::Dataset(format!("malformed silence descriptor {path:?}"));
    let parts: Vec<&str> = rest.split('/').collect();
    let [clip, offset, gain] = parts[..] else {
        return Err(bad());
    };
    Ok(Source::Silence(SilenceSpec {
        clip: if clip == "-" {
            None
        } else {
            Some(clip.parse().map_err(|_| bad())?)
        },
        offset: offset.parse().map_err(|_| bad())?,
        gain: gain.parse().map_err(|_| bad())?,
    }))
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Examples of one split with file paths resolved against the root.
    pub fn examples(&self, split: Split) -> Vec<Example> {
        self.split(split)
            .map(|e| Example {
                source: match &e.source {
                    Source::File(p) => Source::File(self.root.join(p)),
                    other => other.clone(),
                },
                label: e.label(),
            })
            .collect()
    }

    pub fn class_counts(&self, split: Split) -> [usize; super::N_CLASSES] {
        let mut counts = [0; super::N_CLASSES];
        for e in self.split(split) {
            counts[e.label()] += 1;
        }
        counts
    }

    /// Writes `path,label,split` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(Row {
                path: encode_source(&e.source)?,
                label: e.word.clone(),
                split: e.split,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads rows written by [`Manifest::write_csv`]. Background clips are rescanned from `root`.
    pub fn read_csv<R: Read>(input: R, root: impl AsRef<Path>, version: Version) -> Result<Self> {
        let root = root.as_ref();
        let mut entries = Vec::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let row: Row = row?;
            entries.push(Entry {
                source: decode_source(&row.path)?,
                word: row.label,
                split: row.split,
            });
        }
        Ok(Self {
            version,
            root: root.to_path_buf(),
            entries,
            background: scan_background(root)?,
        })
    }
}
