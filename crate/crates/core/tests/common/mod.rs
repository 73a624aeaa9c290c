#![allow(dead_code)]

use bcresnet::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random<T: bcresnet::Scalar>(shape: Shape, seed: u64) -> Tensor<T> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| T::of(r.gen_range(-1.0..1.0)))
}

pub fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}
