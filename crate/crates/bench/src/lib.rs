//! Shared fixtures for the criterion benches.

use finrag_core::{EmbeddingVector, VectorIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random unit vector of dimension `dim`.
pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    finrag_core::l2_normalize(&EmbeddingVector::new(raw).expect("finite"))
}

/// An index of `count` random unit vectors with ids `v0`, `v1`, ...
pub fn random_index(count: usize, dim: usize, seed: u64) -> VectorIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = VectorIndex::new(dim).expect("dim > 0");
    for i in 0..count {
        index
            .add(&format!("v{i}"), &random_unit(&mut rng, dim))
            .expect("unique ids");
    }
    index
}

/// `count` random unit queries.
pub fn random_queries(count: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_unit(&mut rng, dim)).collect()
}
