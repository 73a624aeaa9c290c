mod common;

use std::sync::Arc;

use bcresnet::audio::{AugmentConfig, CLIP_SAMPLES};
use bcresnet::dataset::{micro_fixture, AudioStore, BatchLoader, Example, MicroCorpus, Source};
use bcresnet::model::{load_checkpoint, ModelConfig, ModelParams};
use bcresnet::nn::{Ctx, Module, TensorRole};
use bcresnet::ops::SgdConfig;
use bcresnet::train::{
    cross_entropy, evaluate, train, EpochMetrics, Optimizer, TrainConfig, BEST_CHECKPOINT,
    FINAL_CHECKPOINT, METRICS_FILE,
};
use bcresnet::Error;
use common::rng;
use rand::Rng;

fn micro_loaders(seed: u64) -> (BatchLoader, BatchLoader, BatchLoader) {
    let c = micro_fixture(seed);
    let store = Arc::new(AudioStore::new(c.background));
    (
        BatchLoader::train(
            c.train,
            store.clone(),
            AugmentConfig::for_tau(1.0),
            100,
            seed,
        ),
        BatchLoader::eval(c.val, store.clone(), 100),
        BatchLoader::eval(c.test, store, 100),
    )
}

fn micro_model(seed: u64) -> ModelParams<f32> {
    ModelParams::build(
        ModelConfig::bc_resnet(1.0).with_classes(MicroCorpus::N_CLASSES),
        &mut rng(seed),
    )
    .unwrap()
}

#[test]
fn zero_epochs_return_the_initial_model() {
    let (tr, va, _) = micro_loaders(1);
    let dir = tempfile::tempdir().unwrap();
    let m = micro_model(1);
    let mut cfg = TrainConfig::new(0, 1);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let out = train(m.clone(), &tr, Some(&va), &cfg).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.steps, 0);
    assert_eq!(
        out.model.blocks[0].f2_conv.weight,
        m.blocks[0].f2_conv.weight
    );
    for f in [BEST_CHECKPOINT, FINAL_CHECKPOINT] {
        let ck = load_checkpoint(dir.path().join(f)).unwrap();
        assert_eq!(ck.model.stem.weight, m.stem.weight);
        assert_eq!(ck.step, 0);
    }
    assert_eq!(
        std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap(),
        ""
    );
}

#[test]
fn loss_on_a_fixed_batch_decreases() {
    let (tr, _, _) = micro_loaders(2);
    let batch = tr.epoch(0).next().unwrap().unwrap();
    let mut m = micro_model(2);
    let mut opt = Optimizer::new(SgdConfig::default(), &m);
    let mut losses = Vec::new();
    for _ in 0..10 {
        m.zero_grad();
        let (logits, trace) = m.forward(&batch.features, &mut Ctx::train(0)).unwrap();
        let (loss, g) = cross_entropy(&logits, &batch.labels).unwrap();
        losses.push(loss);
        m.backward(&trace, &g).unwrap();
        m.commit_stats(&trace);
        opt.step(&mut m, 0.05);
    }
    assert!(losses[9] < losses[0], "{losses:?}");
}

#[test]
fn untrained_model_is_near_chance_on_balanced_classes() {
    let mut r = rng(3);
    let examples: Vec<Example> = (0..240)
        .map(|i| Example {
            source: Source::Samples(Arc::new(
                (0..CLIP_SAMPLES).map(|_| r.gen_range(-0.3..0.3)).collect(),
            )),
            label: i % 12,
        })
        .collect();
    let data = BatchLoader::eval(examples, Arc::new(AudioStore::default()), 100);
    let m = ModelParams::<f32>::build(ModelConfig::bc_resnet(1.0), &mut rng(3)).unwrap();
    let acc = evaluate(&m, &data).unwrap();
    // binomial(240, 1/12): 4 sigma is about 0.072
    assert!((acc - 1.0 / 12.0).abs() < 0.075, "{acc}");
    assert_eq!(acc, evaluate(&m, &data).unwrap());
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let (tr, _, _) = micro_loaders(4);
    let mut m = micro_model(4);
    m.classifier.weight.data_mut()[0] = f32::NAN;
    let err = train(m, &tr, None, &TrainConfig::new(3, 4)).unwrap_err();
    match err {
        Error::NonFiniteLoss { epoch, batch, .. } => assert_eq!((epoch, batch), (1, 0)),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn zero_rate_step_changes_nothing() {
    let (tr, _, _) = micro_loaders(5);
    let batch = tr.epoch(0).next().unwrap().unwrap();
    let mut m = micro_model(5);
    let before = m.clone();
    let (logits, trace) = m.forward(&batch.features, &mut Ctx::train(0)).unwrap();
    let (_, g) = cross_entropy(&logits, &batch.labels).unwrap();
    m.backward(&trace, &g).unwrap();
    Optimizer::new(SgdConfig::default(), &m).step(&mut m, 0.0);
    let mut a = Vec::new();
    let mut b = Vec::new();
    m.visit("", &mut |_, _, t| a.extend_from_slice(t.data()));
    before.visit("", &mut |_, _, t| b.extend_from_slice(t.data()));
    assert_eq!(a, b);
}

#[test]
fn weight_decay_reaches_conv_weights_only() {
    let mut m = micro_model(6);
    let before = m.clone();
    m.visit_mut("", &mut |_, role, t| {
        if role.learnable() {
            t.grad_mut();
        }
    });
    let sgd = SgdConfig {
        momentum: 0.0,
        weight_decay: 0.5,
    };
    Optimizer::new(sgd, &m).step(&mut m, 1.0);
    let mut changed = Vec::new();
    let mut old = Vec::new();
    before.visit("", &mut |_, _, t| old.push(t.data().to_vec()));
    let mut i = 0;
    m.visit("", &mut |name, role, t| {
        changed.push((name.to_string(), role, t.data() != old[i].as_slice()));
        i += 1;
    });
    for (name, role, moved) in changed {
        let nonzero = old_nonzero(&before, &name);
        assert_eq!(moved, role == TensorRole::Weight && nonzero, "{name}");
    }
}

fn old_nonzero(m: &ModelParams<f32>, name: &str) -> bool {
    let mut nz = false;
    m.visit("", &mut |n, _, t| {
        if n == name {
            nz = t.data().iter().any(|&v| v != 0.0);
        }
    });
    nz
}

#[test]
fn metrics_lines_carry_every_field() {
    let (tr, va, _) = micro_loaders(8);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::new(2, 8);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let out = train(micro_model(8), &tr, Some(&va), &cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    for (line, m) in lines.iter().zip(&out.metrics) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in [
            "epoch",
            "lr",
            "train_loss",
            "train_acc",
            "val_acc",
            "wall_time_s",
        ] {
            assert!(v.get(key).is_some(), "{key} missing in {line}");
        }
        let parsed: EpochMetrics = serde_json::from_str(line).unwrap();
        assert_eq!(&parsed, m);
    }
    assert_eq!(out.steps, 4);
    assert!(out.best_epoch >= 1);
}
