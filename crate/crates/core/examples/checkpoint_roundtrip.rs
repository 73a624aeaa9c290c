//! Saves a model to a checkpoint, reloads it and shows that predictions are unchanged.
//!
//! ```text
//! cargo run --example checkpoint_roundtrip -- 1.5
//! ```

use bcresnet::model::{
    input_shape, load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, ModelParams,
};
use bcresnet::nn::Module;
use bcresnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bcresnet::Result<()> {
    let tau: f64 = std::env::args()
        .nth(1)
        .map_or(1.0, |t| t.parse().expect("tau"));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = ModelParams::<f32>::build(ModelConfig::bc_resnet(tau), &mut rng)?;
    let x = Tensor::from_fn(input_shape(2, 98), |_| rng.gen_range(-8.0..2.0));

    let path = std::env::temp_dir().join(format!("bcresnet-example-{}.bcrk", std::process::id()));
    save_checkpoint(
        &Checkpoint {
            model: model.clone(),
            step: 0,
        },
        &path,
    )?;
    let size = std::fs::metadata(&path)?.len();
    let restored = load_checkpoint(&path)?;
    std::fs::remove_file(&path)?;

    println!(
        "tau {tau}: {} params, checkpoint {size} bytes",
        model.num_params()
    );
    let before = model.predict(&x)?;
    let after = restored.model.predict(&x)?;
    println!("identical logits after reload: {}", before == after);
    for (i, row) in after.iter().enumerate() {
        let shown: Vec<String> = row.iter().take(4).map(|v| format!("{v:+.3}")).collect();
        println!("  utterance {i}: {} ...", shown.join(" "));
    }
    Ok(())
}
