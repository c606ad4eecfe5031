//! Deterministic inputs shared by the benchmarks.

use cadmatch_core::embedding::{EmbeddingTag, EmbeddingVector};
use cadmatch_core::learner::FeatureMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_map(channels: usize, size: usize, seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FeatureMap::zeros(channels, size, size);
    for v in &mut m.data {
        *v = rng.random_range(-1.0..1.0);
    }
    m
}

pub fn random_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `objects` objects with `views` views each, spread over `classes` classes.
pub fn random_index_entries(classes: u32, objects: u32, views: u32, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for object_id in 0..objects {
        for view_id in 0..views {
            out.push(EmbeddingVector {
                values: random_vector(dim, &mut rng),
                tag: EmbeddingTag::ObjectView,
                class_id: object_id % classes,
                object_id,
                view_id,
            });
        }
    }
    out
}
