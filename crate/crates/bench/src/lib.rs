//! Seeded input generators for the benchmarks.

use avr_core::FeatureSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random features in [-1, 1).
pub fn random_sequence(id: &str, len: usize, dim: usize, seed: u64) -> FeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..len * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    FeatureSequence::new(id, len, dim, frames).expect("valid shape")
}

/// `count` sequences with lengths drawn from `min_len..=max_len`.
pub fn random_corpus(
    count: usize,
    min_len: usize,
    max_len: usize,
    dim: usize,
    seed: u64,
) -> Vec<FeatureSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let len = rng.random_range(min_len..=max_len);
            random_sequence(&format!("clip{i:05}"), len, dim, rng.random())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        assert_eq!(random_sequence("a", 5, 3, 1), random_sequence("a", 5, 3, 1));
        let c = random_corpus(4, 2, 6, 3, 9);
        assert_eq!(c, random_corpus(4, 2, 6, 3, 9));
        assert!(c.iter().all(|s| (2..=6).contains(&s.len()) && s.dim() == 3));
    }
}
