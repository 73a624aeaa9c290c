mod common;

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use bcresnet::audio::{write_wav, AugmentConfig, CLIP_SAMPLES};
use bcresnet::dataset::{
    label_for_word, load_manifest, make_silence, micro_fixture, rebalance, AudioStore, BatchLoader,
    DatasetSource, Example, Manifest, Source, Split, Splits, Version, SILENCE, UNKNOWN,
};
use common::rng;

/// word -> (train, val, test) counts
fn fake_tree(root: &Path, words: &[(&str, usize, usize, usize)], background: bool) {
    let mut val = String::new();
    let mut test = String::new();
    for &(word, tr, va, te) in words {
        fs::create_dir_all(root.join(word)).unwrap();
        for i in 0..tr + va + te {
            let name = format!("{word}/{i:04}_nohash_0.wav");
            let samples: Vec<f32> = (0..8000)
                .map(|t| ((t + i) as f32 * 0.01).sin() * 0.3)
                .collect();
            write_wav(root.join(&name), &samples).unwrap();
            if i >= tr && i < tr + va {
                val.push_str(&name);
                val.push('\n');
            } else if i >= tr + va {
                test.push_str(&name);
                test.push('\n');
            }
        }
    }
    fs::write(root.join("validation_list.txt"), val).unwrap();
    fs::write(root.join("testing_list.txt"), test).unwrap();
    if background {
        let dir = root.join("_background_noise_");
        fs::create_dir_all(&dir).unwrap();
        let noise: Vec<f32> = (0..3 * CLIP_SAMPLES)
            .map(|t| ((t * 7919) % 200) as f32 / 1000.0 - 0.1)
            .collect();
        write_wav(dir.join("white_noise.wav"), &noise).unwrap();
    }
}

#[test]
fn lists_decide_the_split() {
    let dir = tempfile::tempdir().unwrap();
    fake_tree(dir.path(), &[("yes", 3, 1, 1), ("bed", 2, 1, 1)], true);
    let m = load_manifest(dir.path(), Version::V2).unwrap();
    let split_of = |rel: &str| {
        m.entries
            .iter()
            .find(|e| e.source == Source::File(rel.into()))
            .unwrap()
            .split
    };
    assert_eq!(split_of("yes/0004_nohash_0.wav"), Split::Test);
    assert_eq!(split_of("yes/0003_nohash_0.wav"), Split::Val);
    assert_eq!(split_of("yes/0000_nohash_0.wav"), Split::Train);
    assert_eq!(m.entries.len(), 9);
    assert_eq!(m.background.len(), 1);
    assert_eq!(m.background[0].len, 3 * CLIP_SAMPLES);
    assert!(m.entries.iter().all(|e| e.word != "_background_noise_"));
}

#[test]
fn unknown_words_and_keywords() {
    assert_eq!(label_for_word("bed"), UNKNOWN);
    assert_eq!(label_for_word("yes"), 0);
    assert_eq!(label_for_word("go"), 9);
}

#[test]
fn missing_lists_or_empty_splits_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    fake_tree(dir.path(), &[("yes", 3, 1, 1)], false);
    fs::remove_file(dir.path().join("testing_list.txt")).unwrap();
    assert!(load_manifest(dir.path(), Version::V1).is_err());

    let dir = tempfile::tempdir().unwrap();
    fake_tree(dir.path(), &[("yes", 3, 0, 1)], false);
    let err = load_manifest(dir.path(), Version::V1).unwrap_err();
    assert!(err.to_string().contains("val"), "{err}");
}

#[test]
fn no_utterance_in_two_splits() {
    let dir = tempfile::tempdir().unwrap();
    fake_tree(
        dir.path(),
        &[("yes", 4, 2, 2), ("no", 3, 1, 1), ("cat", 5, 1, 1)],
        false,
    );
    let m = load_manifest(dir.path(), Version::V2).unwrap();
    let mut seen = HashSet::new();
    for e in &m.entries {
        let Source::File(p) = &e.source else {
            unreachable!()
        };
        assert!(seen.insert(p.clone()));
    }
}

fn keyword_tree(root: &Path, per_class: &[usize], unknown: usize) {
    let words = [
        "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go",
    ];
    let mut spec: Vec<(&str, usize, usize, usize)> = words
        .iter()
        .zip(per_class)
        .map(|(&w, &n)| (w, n, 1, 1))
        .collect();
    spec.push(("bed", unknown, 1, 1));
    fake_tree(root, &spec, true);
}

#[test]
fn uniform_counts_rebalance_to_ten() {
    let dir = tempfile::tempdir().unwrap();
    keyword_tree(dir.path(), &[10; 10], 25);
    let m = rebalance(
        &load_manifest(dir.path(), Version::V2).unwrap(),
        &mut rng(0),
    )
    .unwrap();
    let c = m.class_counts(Split::Train);
    assert_eq!((c[UNKNOWN], c[SILENCE]), (10, 10));
    assert!(c[..10].iter().all(|&n| n == 10));
}

#[test]
fn two_class_toy_uses_their_mean() {
    let dir = tempfile::tempdir().unwrap();
    fake_tree(
        dir.path(),
        &[("yes", 8, 1, 1), ("no", 12, 1, 1), ("bed", 30, 1, 1)],
        true,
    );
    let m = rebalance(
        &load_manifest(dir.path(), Version::V2).unwrap(),
        &mut rng(1),
    )
    .unwrap();
    let c = m.class_counts(Split::Train);
    assert_eq!((c[UNKNOWN], c[SILENCE]), (10, 10));
}

#[test]
fn few_unknowns_are_all_kept() {
    let dir = tempfile::tempdir().unwrap();
    keyword_tree(dir.path(), &[10; 10], 4);
    let raw = load_manifest(dir.path(), Version::V2).unwrap();
    let m = rebalance(&raw, &mut rng(2)).unwrap();
    assert_eq!(m.class_counts(Split::Train)[UNKNOWN], 4);
    assert_eq!(m.class_counts(Split::Train)[SILENCE], 10);
}

#[test]
fn rebalanced_counts_stay_near_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    keyword_tree(dir.path(), &[7, 9, 11, 8, 12, 10, 9, 13, 6, 10], 40);
    let raw = load_manifest(dir.path(), Version::V2).unwrap();
    let m = rebalance(&raw, &mut rng(3)).unwrap();
    let c = m.class_counts(Split::Train);
    let mean = c[..10].iter().sum::<usize>() as f64 / 10.0;
    assert!((c[UNKNOWN] as f64 - mean).abs() <= 1.0);
    assert!((c[SILENCE] as f64 - mean).abs() <= 1.0);
    // test split untouched
    let t: Vec<_> = raw.split(Split::Test).collect();
    let t2: Vec<_> = m.split(Split::Test).collect();
    assert_eq!(t, t2);
    // unknown subsample is reproducible
    assert_eq!(m, rebalance(&raw, &mut rng(3)).unwrap());
}

#[test]
fn no_keywords_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fake_tree(dir.path(), &[("bed", 5, 1, 1)], false);
    assert!(rebalance(
        &load_manifest(dir.path(), Version::V2).unwrap(),
        &mut rng(0)
    )
    .is_err());
}

#[test]
fn silence_synthesis() {
    assert!(make_silence(&[48_000], 0, &mut rng(0)).is_empty());
    let a = make_silence(&[48_000, 20_000], 50, &mut rng(4));
    let b = make_silence(&[48_000, 20_000], 50, &mut rng(4));
    assert_eq!(a, b);
    assert!(a.iter().all(|e| e.label == SILENCE));
    // without usable clips every example is zeros
    let z = make_silence(&[100], 5, &mut rng(5));
    let store = AudioStore::default();
    for e in &z {
        assert!(store
            .waveform(e)
            .unwrap()
            .samples()
            .iter()
            .all(|&s| s == 0.0));
    }
}

#[test]
fn silence_crops_scale_the_clip() {
    let clip: Vec<f32> = (0..2 * CLIP_SAMPLES)
        .map(|i| (i % 100) as f32 / 100.0)
        .collect();
    let store = AudioStore::new(vec![clip.clone()]);
    let ex = make_silence(&[clip.len()], 30, &mut rng(6));
    for e in &ex {
        let w = store.waveform(e).unwrap();
        let Source::Silence(s) = &e.source else {
            panic!()
        };
        match s.clip {
            None => assert!(w.samples().iter().all(|&v| v == 0.0)),
            Some(_) => {
                assert!((0.0..=1.0).contains(&s.gain));
                assert_eq!(w.samples()[5], clip[s.offset + 5] * s.gain);
            }
        }
    }
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    keyword_tree(dir.path(), &[3; 10], 6);
    let m = rebalance(
        &load_manifest(dir.path(), Version::V1).unwrap(),
        &mut rng(7),
    )
    .unwrap();
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("path,label,split\n"));
    let back = Manifest::read_csv(buf.as_slice(), dir.path(), Version::V1).unwrap();
    assert_eq!(back.entries, m.entries);
}

#[test]
fn splits_open_real_layout_and_load_audio() {
    let dir = tempfile::tempdir().unwrap();
    keyword_tree(dir.path(), &[2; 10], 3);
    let src = DatasetSource::parse(dir.path().to_str().unwrap(), Version::V2).unwrap();
    let s = Splits::open(&src, 0).unwrap();
    assert_eq!(s.n_classes, 12);
    let loader = BatchLoader::train(
        s.train.clone(),
        s.store.clone(),
        AugmentConfig::for_tau(3.0),
        7,
        0,
    );
    for b in loader.epoch(0) {
        let b = b.unwrap();
        assert_eq!((b.features.shape().h, b.features.shape().w), (40, 98));
        assert!(b.features.all_finite());
    }
    assert!(DatasetSource::parse("/definitely/not/here", Version::V2).is_err());
}

#[test]
fn micro_fixture_contract() {
    let a = micro_fixture(7);
    let b = micro_fixture(7);
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    let all: Vec<&Example> = a.train.iter().chain(&a.val).chain(&a.test).collect();
    assert_eq!(all.len(), 256);
    let mut counts = [0; 4];
    for e in &all {
        counts[e.label] += 1;
        let Source::Samples(s) = &e.source else {
            panic!("micro examples live in memory")
        };
        assert_eq!(s.len(), CLIP_SAMPLES);
    }
    assert_eq!(counts, [64; 4]);
}

#[test]
fn eval_loader_repeats_and_train_loader_reshuffles() {
    let c = micro_fixture(1);
    let store = Arc::new(AudioStore::new(c.background));
    let eval = BatchLoader::eval(c.test.clone(), store.clone(), 10);
    let first: Vec<_> = eval.epoch(0).map(Result::unwrap).collect();
    let second: Vec<_> = eval.epoch(0).map(Result::unwrap).collect();
    assert_eq!(first.len(), 4);
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
    }
    let train = BatchLoader::train(c.train, store, AugmentConfig::for_tau(1.0), 100, 9);
    assert_ne!(train.order(0), train.order(1));
}
