//! One line per acceptance criterion. Exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::thread;

use bcresnet::audio::AugmentConfig;
use bcresnet::block::{BlockConfig, BlockParams};
use bcresnet::dataset::{BatchLoader, DatasetSource, Splits, Version};
use bcresnet::gradcheck::{self, CheckKind, GradcheckOptions};
use bcresnet::model::{count_mults, count_params, input_shape, ModelConfig, ModelParams};
use bcresnet::nn::{Ctx, Module, TensorRole};
use bcresnet::ops::{self, NormParams};
use bcresnet::train::{evaluate, train, TrainConfig, FINAL_CHECKPOINT, METRICS_FILE};
use bcresnet::{Shape, Tensor};
use common::{bits, random, rng};
use rand::Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn params() -> Outcome {
    let paper = [
        (1.0, 9.2e3),
        (1.5, 17.2e3),
        (2.0, 27.3e3),
        (3.0, 54.2e3),
        (6.0, 188e3),
        (8.0, 321e3),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (tau, want) in paper {
        let got = count_params(&ModelConfig::bc_resnet(tau)).unwrap() as f64;
        let dev = got / want - 1.0;
        ok &= dev.abs() <= 0.03;
        parts.push(format!("tau {tau}: {got} ({:+.2}%)", dev * 100.0));
    }
    check(ok, parts.join(", "))
}

fn mults() -> Outcome {
    let paper = [(1.0, 3.1e6), (3.0, 16.2e6), (8.0, 89.1e6)];
    let mut ok = true;
    let mut parts = Vec::new();
    let mut prev = 0;
    for (tau, want) in paper {
        let cfg = ModelConfig::bc_resnet(tau);
        let m = ModelParams::<f32>::build(cfg, &mut rng(0)).unwrap();
        for frames in [98, 100] {
            let mut ctx = Ctx::eval();
            m.forward(&random(input_shape(1, frames), 1), &mut ctx)
                .unwrap();
            ok &= ctx.meter.mults == count_mults(&cfg, frames).unwrap();
        }
        let got = count_mults(&cfg, 100).unwrap();
        let dev = got as f64 / want - 1.0;
        ok &= dev.abs() <= 0.35 && got > prev;
        prev = got;
        parts.push(format!("tau {tau}: {got} ({:+.1}%)", dev * 100.0));
    }
    check(
        ok,
        format!("metered == analytic at W 98/100; {}", parts.join(", ")),
    )
}

fn shape_ledger() -> Outcome {
    let m = ModelParams::<f32>::build(ModelConfig::bc_resnet(1.0), &mut rng(0)).unwrap();
    let (_, trace) = m
        .forward(&random(input_shape(1, 98), 2), &mut Ctx::eval())
        .unwrap();
    let want = [
        (16, 20),
        (8, 20),
        (12, 10),
        (16, 5),
        (20, 5),
        (20, 1),
        (32, 1),
        (32, 1),
        (12, 1),
    ];
    check(
        trace.shape_ledger == want,
        format!("{:?}", trace.shape_ledger),
    )
}

fn gradients() -> Outcome {
    let report = gradcheck::run(&GradcheckOptions::default()).unwrap();
    let blocks: Vec<_> = report
        .results
        .iter()
        .filter(|r| r.kind == CheckKind::Block)
        .map(|r| r.name)
        .collect();
    let ok = report.passed()
        && report.seeds >= 5
        && blocks.contains(&"normal")
        && blocks.contains(&"transition");
    let worst = report.worst().map_or(0.0, |r| r.max_rel_err);
    check(
        ok,
        format!(
            "{} ops + {} blocks, {} seeds, worst rel err {worst:.2e} (threshold {:.0e})",
            report.count(CheckKind::Op),
            report.count(CheckKind::Block),
            report.seeds,
            report.threshold
        ),
    )
}

fn randomized(cfg: BlockConfig, seed: u64) -> BlockParams<f32> {
    let mut r = rng(seed);
    let mut b = BlockParams::new(cfg, &mut r).unwrap();
    b.visit_mut("", &mut |_, role, t| match role {
        TensorRole::Scale => t
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = r.gen_range(0.5..1.5)),
        TensorRole::Shift | TensorRole::RunningMean => t
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = r.gen_range(-0.5..0.5)),
        TensorRole::RunningVar => t
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = r.gen_range(0.5..2.0)),
        _ => {}
    });
    b
}

fn identities() -> Outcome {
    let zero = BlockParams::<f32>::zeroed(BlockConfig::new(8, 8, 1, 4)).unwrap();
    let x = random(Shape::new(2, 8, 20, 98), 3);
    let identity = zero.forward(&x, &mut Ctx::eval()).unwrap().0 == x;

    let b = randomized(BlockConfig::new(6, 6, 1, 2), 4);
    let x = random(Shape::new(3, 6, 20, 13), 5);
    let (y, _) = b.forward(&x, &mut Ctx::train(9)).unwrap();
    let mut ctx = Ctx::train(9);
    let (f2, _) = b.f2_forward(&x, &mut ctx).unwrap();
    let (r, _) = b.f1_forward(&ops::avg_pool_freq(&f2), &mut ctx).unwrap();
    let manual = x
        .add(&f2)
        .unwrap()
        .add(&ops::broadcast_freq(&r, 20).unwrap())
        .unwrap();
    let composition = bits(&y) == bits(&manual);

    let mut ssn = true;
    let conv = random::<f32>(Shape::new(2, 6, 20, 7), 6);
    let p = &b.f2_ssn;
    let s = p.sub_bands();
    for training in [true, false] {
        let y = ops::subspectral_norm(&conv, p, training).unwrap().0;
        let bands: Vec<_> = (0..s)
            .map(|band| {
                let mut q = NormParams::<f32>::batch_norm(6);
                let pick = |t: &Tensor<f32>| {
                    Tensor::from_fn(Shape::new(1, 6, 1, 1), |c| t.data()[c * s + band])
                };
                q.gamma = pick(&p.gamma);
                q.beta = pick(&p.beta);
                q.running_mean = pick(&p.running_mean);
                q.running_var = pick(&p.running_var);
                let slice = conv.slice_freq(band * 20 / s, (band + 1) * 20 / s).unwrap();
                ops::batch_norm(&slice, &q, training).unwrap().0
            })
            .collect();
        ssn &= bits(&y) == bits(&Tensor::concat_freq(&bands).unwrap());
    }
    check(
        identity && composition && ssn,
        format!("zero-weight identity {identity}, composition bitwise {composition}, SSN slice oracle bitwise {ssn}"),
    )
}

fn desk_scale() -> Outcome {
    let seed = 7;
    let splits = Splits::open(&DatasetSource::Micro, seed).unwrap();
    let cfg = ModelConfig::bc_resnet(1.0).with_classes(splits.n_classes);
    let store = splits.store.clone();
    let train_data = BatchLoader::train(
        splits.train,
        store.clone(),
        AugmentConfig::for_tau(1.0),
        100,
        seed,
    );
    let val = BatchLoader::eval(splits.val, store.clone(), 100);
    let test = BatchLoader::eval(splits.test, store, 100);
    let model = ModelParams::build(cfg, &mut rng(seed)).unwrap();
    let out = train(model, &train_data, Some(&val), &TrainConfig::new(50, seed)).unwrap();
    let train_acc = out.metrics.last().map_or(0.0, |m| m.train_acc);
    let test_acc = evaluate(&out.model, &test).unwrap();
    check(
        train_acc >= 0.95 && test_acc >= 0.90,
        format!("50 epochs: train acc {train_acc:.4} (>= 0.95), test acc {test_acc:.4} (>= 0.90)"),
    )
}

fn full_dataset() -> Outcome {
    let Some(root) = std::env::var_os("BCRESNET_SPEECH_COMMANDS") else {
        return Outcome::Skip(
            "set BCRESNET_SPEECH_COMMANDS to a Speech Commands v2 root to run".into(),
        );
    };
    let seed = 7;
    let source = match DatasetSource::parse(&root.to_string_lossy(), Version::V2) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let splits = match Splits::open(&source, seed) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let cfg = ModelConfig::bc_resnet(1.0);
    let store = splits.store.clone();
    let train_data = BatchLoader::train(
        splits.train,
        store.clone(),
        AugmentConfig::for_tau(1.0),
        100,
        seed,
    );
    let val = BatchLoader::eval(splits.val, store, 100);
    let model = ModelParams::build(cfg, &mut rng(seed)).unwrap();
    let out = train(model, &train_data, Some(&val), &TrainConfig::new(5, seed)).unwrap();
    let val_acc = out.metrics.last().and_then(|m| m.val_acc).unwrap_or(0.0);
    check(
        val_acc > 0.70,
        format!("5 epochs on v2: val acc {val_acc:.4} (> 0.70)"),
    )
}

fn cli_train(out: &Path, workers: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_bcresnet"))
        .args([
            "--workers",
            workers,
            "train",
            "--dataset",
            "micro",
            "--seed",
            "7",
            "--epochs",
            "2",
        ])
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .status()
        .map_or(false, |s| s.success())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !cli_train(&a, "1") || !cli_train(&b, "3") {
        return Outcome::Fail("train run failed".into());
    }
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let metrics = same(METRICS_FILE);
    let final_ckpt = same(FINAL_CHECKPOINT);
    let best = same(bcresnet::train::BEST_CHECKPOINT);
    check(
        metrics && final_ckpt && best,
        format!("2-epoch runs with 1 and 3 workers: metrics identical {metrics}, checkpoints identical {}", final_ckpt && best),
    )
}

fn main() -> ExitCode {
    // the long training criterion runs alongside the quick ones
    let slow = thread::spawn(desk_scale);
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("parameter counts", params),
        ("multiply counts", mults),
        ("shape ledger", shape_ledger),
        ("gradient verification", gradients),
        ("broadcasted-residual identities", identities),
    ];
    let mut results: Vec<(&str, Outcome)> = criteria.into_iter().map(|(n, f)| (n, f())).collect();
    results.push((
        "desk-scale learning",
        slow.join()
            .unwrap_or_else(|_| Outcome::Fail("panicked".into())),
    ));
    results.push(("full-dataset smoke run", full_dataset()));
    results.push(("determinism", determinism()));

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {}. {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
