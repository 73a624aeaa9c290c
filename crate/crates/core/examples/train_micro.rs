//! Trains BC-ResNet-1 on the synthetic four-class corpus and reports test accuracy.
//!
//! ```text
//! cargo run --release --example train_micro -- 50 7
//! ```

use std::sync::Arc;

use bcresnet::audio::AugmentConfig;
use bcresnet::dataset::{micro_fixture, AudioStore, BatchLoader, MicroCorpus};
use bcresnet::model::{ModelConfig, ModelParams};
use bcresnet::train::{evaluate, train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bcresnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(50, |a| a.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(7, |a| a.parse().expect("seed"));

    let corpus = micro_fixture(seed);
    let store = Arc::new(AudioStore::new(corpus.background.clone()));
    let cfg = ModelConfig::bc_resnet(1.0).with_classes(MicroCorpus::N_CLASSES);
    let train_data = BatchLoader::train(
        corpus.train,
        store.clone(),
        AugmentConfig::for_tau(cfg.tau),
        100,
        seed,
    );
    let val = BatchLoader::eval(corpus.val, store.clone(), 100);
    let test = BatchLoader::eval(corpus.test, store, 100);

    let model = ModelParams::build(cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let out = train(
        model,
        &train_data,
        Some(&val),
        &TrainConfig::new(epochs, seed),
    )?;

    let last = out.metrics.last();
    println!(
        "final train accuracy {:.4}",
        last.map_or(0.0, |m| m.train_acc)
    );
    println!("best epoch {}", out.best_epoch);
    println!("test accuracy (final) {:.4}", evaluate(&out.model, &test)?);
    println!("test accuracy (best)  {:.4}", evaluate(&out.best, &test)?);
    Ok(())
}
