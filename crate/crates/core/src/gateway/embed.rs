use super::{BackendError, EmbeddingBackend};

/// Deterministic hashed bag-of-features embedder for offline use.
///
/// Features are the lowercase alphanumeric word tokens of the text (weight 1)
/// and its lowercase character trigrams (weight 0.5). Each feature is hashed
/// with 64-bit FNV-1a; `hash % dim` selects the coordinate and the top bit
/// selects the sign. The result is scaled to unit length. Text without any
/// feature maps to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        let mut add = |prefix: &[u8], feature: &[u8], weight: f64| {
            let h = fnv1a(prefix, feature);
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[idx] += sign * weight;
        };
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            add(b"w:", word.as_bytes(), 1.0);
        }
        let chars: Vec<char> = lower.chars().collect();
        let mut buf = String::new();
        for tri in chars.windows(3) {
            buf.clear();
            buf.extend(tri);
            add(b"c:", buf.as_bytes(), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.embed_text(text))
    }
}

fn fnv1a(prefix: &[u8], bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    prefix
        .iter()
        .chain(bytes)
        .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na.sqrt() * nb.sqrt()))
}

/// `1 - cosine similarity`; a zero-norm operand gets the maximal distance 2.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    cosine_similarity(a, b).map_or(2.0, |s| 1.0 - s)
}
