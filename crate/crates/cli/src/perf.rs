//! Single-threaded exact search timing.

use std::time::Instant;

use finrag_core::{EmbeddingVector, VectorIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SearchTiming {
    pub count: usize,
    pub dim: usize,
    pub k: usize,
    pub queries: usize,
    pub build_ms: f64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub max_ms: f64,
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Builds a random `count × dim` index and times `queries` top-`k` searches.
pub fn time_search(count: usize, dim: usize, k: usize, queries: usize, seed: u64) -> SearchTiming {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let mut index = VectorIndex::new(dim).expect("dim > 0");
    let mut row = vec![0f32; dim];
    for i in 0..count {
        for (dst, x) in row.iter_mut().zip(unit(&mut rng, dim)) {
            *dst = x as f32;
        }
        index.add_row(&format!("v{i}"), &row).expect("unique ids");
    }
    let build_ms = start.elapsed().as_secs_f64() * 1e3;

    let qs: Vec<EmbeddingVector> = (0..queries.max(1))
        .map(|_| EmbeddingVector::new(unit(&mut rng, dim)).expect("finite"))
        .collect();
    // One untimed pass warms caches and page tables.
    index.search_top_k(&qs[0], k).expect("valid query");
    let mut samples: Vec<f64> = qs
        .iter()
        .map(|q| {
            let t = Instant::now();
            std::hint::black_box(index.search_top_k(q, k).expect("valid query"));
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    SearchTiming {
        count,
        dim,
        k,
        queries: samples.len(),
        build_ms,
        mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
        p50_ms: samples[(samples.len() - 1) / 2],
        max_ms: samples[samples.len() - 1],
    }
}
