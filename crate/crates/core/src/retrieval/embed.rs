//! Embedding providers.

use std::fmt;

use super::text::tokenize;

pub const DEFAULT_HASHED_DIMENSION: usize = 256;

/// Maps text to a fixed-dimension vector. Must be deterministic for a given
/// provider and input.
pub trait EmbeddingProvider: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Offline bag-of-words embedder: each token is hashed into a bucket, bucket
/// counts are term frequencies, and the result is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dimension: usize,
}

impl HashedEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashedEmbedder { dimension }
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        HashedEmbedder::new(DEFAULT_HASHED_DIMENSION)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashedEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dimension];
        for tok in tokenize(text) {
            let bucket = (fnv1a(tok.as_bytes()) % self.dimension as u64) as usize;
            v[bucket] += 1.0;
        }
        normalize(&mut v);
        v
    }
}

pub fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
}

fn lanes(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += f64::from(x[i]) * f64::from(y[i]);
        }
    }
    for (x, y) in ra.iter().zip(rb) {
        acc[0] += f64::from(*x) * f64::from(*y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Dot product in f64, summed in four lanes so the loop vectorizes.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    lanes(a, b)
}

pub fn norm(v: &[f32]) -> f64 {
    lanes(v, v).sqrt()
}

/// Cosine from precomputed norms; zero when either norm is zero.
pub fn cosine_with_norms(a: &[f32], na: f64, b: &[f32], nb: f64) -> f64 {
    if a.len() != b.len() || na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Cosine similarity in f64; zero when either vector has zero norm or the
/// dimensions differ.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    cosine_with_norms(a, norm(a), b, norm(b))
}
