//! Dense embedding contract and the default feature-hashing embedder.

use crate::tokenize::whitespace_tokens;

pub const DEFAULT_DIM: usize = 256;

/// Maps text to a fixed-dimension vector. Implementations must be
/// deterministic and return either a unit vector or the zero vector.
pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Hashes each whitespace token into one of `dim` buckets, counts, and
/// L2-normalizes.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(DEFAULT_DIM)
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-fnv1a-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in whitespace_tokens(text) {
            v[self.bucket(&token)] += 1.0;
        }
        normalize(&mut v);
        v
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

pub fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Cosine similarity; zero vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashingEmbedder::default();
        assert!(e.embed("").iter().all(|&x| x == 0.0));
        assert_eq!(e.embed("").len(), 256);
    }

    #[test]
    fn self_similarity_is_one() {
        let e = HashingEmbedder::default();
        for t in ["alpha", "search the crm for contacts", "a a a b"] {
            let v = e.embed(t);
            assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distinct_buckets_are_orthogonal() {
        let e = HashingEmbedder::default();
        // Precondition for the orthogonality claim: the pair must not collide.
        assert_ne!(e.bucket("alpha"), e.bucket("beta"));
        assert_eq!(cosine(&e.embed("alpha"), &e.embed("beta")), 0.0);
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
