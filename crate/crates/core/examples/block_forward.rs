//! Runs one normal and one transition BC-ResBlock and shows the broadcast residual.
//!
//! ```text
//! cargo run --example block_forward
//! ```

use bcresnet::block::{BlockConfig, BlockParams};
use bcresnet::nn::{Ctx, Module};
use bcresnet::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bcresnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::<f32>::from_fn(Shape::new(1, 8, 20, 98), |_| rng.gen_range(-1.0..1.0));

    let normal = BlockParams::<f32>::new(BlockConfig::new(8, 8, 1, 2), &mut rng)?;
    let (y, _) = normal.forward(&x, &mut Ctx::eval())?;
    println!(
        "normal block     {} -> {}  ({} params)",
        x.shape(),
        y.shape(),
        normal.num_params()
    );

    // y - x - f2(x) is the temporal branch, identical on every frequency row
    let (f2, _) = normal.f2_forward(&x, &mut Ctx::eval())?;
    let residual = y.zip_map(&x.add(&f2)?, |a, b| a - b)?;
    let spread = (0..98)
        .map(|t| {
            let col: Vec<f32> = (0..20).map(|h| residual.at(0, 0, h, t)).collect();
            col.iter().cloned().fold(f32::MIN, f32::max)
                - col.iter().cloned().fold(f32::MAX, f32::min)
        })
        .fold(0.0f32, f32::max);
    println!("broadcast term: max spread across frequency {spread:.2e}");

    let transition = BlockParams::<f32>::new(BlockConfig::new(8, 12, 2, 2), &mut rng)?;
    let (z, _) = transition.forward(&y, &mut Ctx::eval())?;
    println!(
        "transition block {} -> {}  ({} params)",
        y.shape(),
        z.shape(),
        transition.num_params()
    );

    let zero = BlockParams::<f32>::zeroed(BlockConfig::new(8, 8, 1, 1))?;
    let (id, _) = zero.forward(&x, &mut Ctx::eval())?;
    println!("zero-weight block is the identity: {}", id == x);
    Ok(())
}
