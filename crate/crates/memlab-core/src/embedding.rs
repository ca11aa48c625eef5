//! Embedding contract plus the bundled deterministic embedder.
//!
//! Real deployments plug a model-backed embedder in behind
//! [`EmbeddingProvider`]; offline runs and tests use [`HashEmbedder`], which
//! maps text to a pseudo-random unit vector seeded from its SHA-256 digest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic text-to-vector mapping with a fixed output dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Hash-seeded pseudo-random unit vectors. Identical text always maps to the
/// identical vector; distinct texts land nearly orthogonal in high dimension.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashEmbedder { dimension }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(384)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let digest = Sha256::digest(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        let mut v: Vec<f32> = (0..self.dimension)
            .map(|_| rng.gen::<f32>() * 2.0 - 1.0)
            .collect();
        normalize(&mut v);
        v
    }
}

/// Scales `v` to unit L2 norm in place. Zero vectors are left unchanged.
pub fn normalize(v: &mut [f32]) {
    let norm = v
        .iter()
        .map(|x| (*x as f64) * (*x as f64))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|x| (*x as f64) * (*x as f64))
        .sum::<f64>()
        .sqrt()
}
