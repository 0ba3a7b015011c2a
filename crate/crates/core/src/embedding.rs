//! Text embedding providers and cosine similarity.

use thiserror::Error;

use crate::model::EmbeddingVector;

pub const DEFAULT_DIMENSION: usize = 384;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
}

/// A deterministic text → vector mapping.
///
/// Implementations must return bitwise-identical vectors for identical input,
/// across calls and across processes.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Signed feature hashing over character trigrams.
///
/// Text is lowercased, whitespace runs collapse to one space, and the result
/// is padded with a leading and trailing space so word boundaries produce
/// their own trigrams. Each trigram lands in one bucket with a +1/-1 sign
/// taken from an independent bit of the same hash, and the bucket vector is
/// L2-normalized.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dimension: usize,
}

impl TrigramEmbedder {
    pub const NAME: &'static str = "trigram-hash-v1";

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    fn bucket_counts(&self, text: &str) -> Vec<f64> {
        let chars = padded_chars(text);
        let mut signed = vec![0.0f64; self.dimension];
        let mut unsigned = vec![0.0f64; self.dimension];
        let mut buf = [0u8; 12];
        for gram in chars.windows(3) {
            let mut len = 0;
            for c in gram {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = mix64(fnv1a64(&buf[..len]));
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            signed[bucket] += sign;
            unsigned[bucket] += 1.0;
        }
        // Opposite-signed collisions can cancel everything out; fall back to
        // plain counts so non-empty text always has a direction.
        if signed.iter().all(|v| *v == 0.0) {
            unsigned
        } else {
            signed
        }
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for TrigramEmbedder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let counts = self.bucket_counts(text);
        let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
        let values = counts.iter().map(|v| (v / norm) as f32).collect();
        Ok(EmbeddingVector::new(values, self.dimension).expect("finite values of configured dimension"))
    }
}

fn padded_chars(text: &str) -> Vec<char> {
    let mut chars = vec![' '];
    for word in text.split_whitespace() {
        if chars.len() > 1 {
            chars.push(' ');
        }
        chars.extend(word.chars().flat_map(char::to_lowercase));
    }
    chars.push(' ');
    chars
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for byte in bytes {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

// splitmix64 finalizer; spreads FNV's weak high bits before we take the sign.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Cosine similarity in f64, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    cosine_slices(a.as_slice(), b.as_slice())
}

pub fn cosine_slices(a: &[f32], b: &[f32]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}
