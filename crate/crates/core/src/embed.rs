//! Chunk embedding storage and the offline feature-hashing embedder.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::tokenize::{Tokenizer, WordPunctTokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("vector for {owner_id}#{chunk_index} has dimension {got}, expected {expected}")]
    DimMismatch {
        owner_id: String,
        chunk_index: usize,
        expected: usize,
        got: usize,
    },
    #[error("vector for {owner_id}#{chunk_index} is zero or not finite")]
    Degenerate { owner_id: String, chunk_index: usize },
    #[error("text for {owner_id}#{chunk_index} is empty")]
    EmptyText { owner_id: String, chunk_index: usize },
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("provider failure: {0}")]
    Provider(String),
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity; `None` for a zero vector or unequal lengths.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    Some(dot(a, b) / (na * nb))
}

/// Scales `v` to unit length in place. Returns false for zero or non-finite
/// input, leaving it untouched.
pub fn normalize(v: &mut [f32]) -> bool {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / n) as f32;
    }
    true
}

/// Vectors whose norm is within this of 1 count as unit length.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Store owner id of a document. Query and document ids may coincide, so
/// owners are namespaced by kind.
pub fn doc_owner(doc_id: &str) -> String {
    format!("d/{doc_id}")
}

pub fn query_owner(query_id: &str) -> String {
    format!("q/{query_id}")
}

pub fn aug_owner(aug_id: &str) -> String {
    format!("a/{aug_id}")
}

/// Unit-length vectors keyed by `(owner_id, chunk_index)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<(String, usize), Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDim);
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Normalizes and stores `vector`, replacing any previous entry.
    pub fn insert(&mut self, owner_id: &str, chunk_index: usize, mut vector: Vec<f32>) -> Result<(), EmbedError> {
        if vector.len() != self.dim {
            return Err(EmbedError::DimMismatch {
                owner_id: owner_id.into(),
                chunk_index,
                expected: self.dim,
                got: vector.len(),
            });
        }
        let n = norm(&vector);
        if n == 0.0 || !n.is_finite() {
            return Err(EmbedError::Degenerate {
                owner_id: owner_id.into(),
                chunk_index,
            });
        }
        // Already-unit vectors are kept bit-for-bit so stores round-trip
        // through files unchanged.
        if libm::fabs(n - 1.0) > UNIT_TOLERANCE {
            normalize(&mut vector);
        }
        self.entries.insert((owner_id.into(), chunk_index), vector);
        Ok(())
    }

    pub fn get(&self, owner_id: &str, chunk_index: usize) -> Option<&[f32]> {
        self.entries
            .get(&(String::from(owner_id), chunk_index))
            .map(Vec::as_slice)
    }

    /// All chunk vectors of `owner_id` in chunk order.
    pub fn chunks(&self, owner_id: &str) -> Vec<&[f32]> {
        self.entries
            .range((String::from(owner_id), 0)..=(String::from(owner_id), usize::MAX))
            .map(|(_, v)| v.as_slice())
            .collect()
    }

    pub fn contains_owner(&self, owner_id: &str) -> bool {
        !self.chunks(owner_id).is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, &[f32])> {
        self.entries
            .iter()
            .map(|((o, i), v)| (o.as_str(), *i, v.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedInput {
    pub owner_id: String,
    pub chunk_index: usize,
    pub text: String,
}

impl EmbedInput {
    pub fn new(owner_id: impl Into<String>, chunk_index: usize, text: impl Into<String>) -> Self {
        Self {
            owner_id: owner_id.into(),
            chunk_index,
            text: text.into(),
        }
    }
}

/// Source of embedding vectors. Output order matches input order.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Embeds `inputs` with `provider` and stores the normalized vectors.
pub fn embed_into<E: Embedder + ?Sized>(
    store: &mut EmbeddingStore,
    inputs: &[EmbedInput],
    provider: &E,
) -> Result<(), EmbedError> {
    if provider.dim() != store.dim() {
        return Err(EmbedError::DimMismatch {
            owner_id: String::from("<provider>"),
            chunk_index: 0,
            expected: store.dim(),
            got: provider.dim(),
        });
    }
    for input in inputs {
        if input.text.trim().is_empty() {
            return Err(EmbedError::EmptyText {
                owner_id: input.owner_id.clone(),
                chunk_index: input.chunk_index,
            });
        }
    }
    let vectors = provider.embed(inputs)?;
    if vectors.len() != inputs.len() {
        return Err(EmbedError::Provider(format!(
            "provider returned {} vectors for {} inputs",
            vectors.len(),
            inputs.len()
        )));
    }
    for (input, v) in inputs.iter().zip(vectors) {
        store.insert(&input.owner_id, input.chunk_index, v)?;
    }
    Ok(())
}

pub fn embed<E: Embedder + ?Sized>(inputs: &[EmbedInput], provider: &E) -> Result<EmbeddingStore, EmbedError> {
    let mut store = EmbeddingStore::new(provider.dim())?;
    embed_into(&mut store, inputs, provider)?;
    Ok(store)
}

/// Signed feature hashing of the default-tokenized token multiset.
///
/// Each token adds ±1 to bucket `h mod dim`, sign from the top hash bit.
/// Deterministic for a given `(dim, seed)` and independent of the owner key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDim);
        }
        Ok(Self { dim, seed })
    }

    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for tok in WordPunctTokenizer.tokenize(text) {
            let h = feature_hash(self.seed, tok.surface.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(inputs.iter().map(|i| self.embed_text(&i.text)).collect())
    }
}

/// FNV-1a over the seed and bytes, finished with the splitmix64 mixer.
pub fn feature_hash(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_deterministic() {
        let e = HashEmbedder::new(64, 42).unwrap();
        let inputs = [EmbedInput::new("a", 0, "Smith v. Jones"), EmbedInput::new("b", 0, "Smith v. Jones")];
        let store = embed(&inputs, &e).unwrap();
        assert_eq!(store.get("a", 0), store.get("b", 0));
        assert!((norm(store.get("a", 0).unwrap()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn seed_changes_vectors() {
        let a = HashEmbedder::new(64, 1).unwrap().embed_text("habeas corpus petition");
        let b = HashEmbedder::new(64, 2).unwrap().embed_text("habeas corpus petition");
        assert_ne!(a, b);
    }

    #[test]
    fn empty_text_rejected() {
        let e = HashEmbedder::new(8, 0).unwrap();
        let err = embed(&[EmbedInput::new("x", 3, "  ")], &e).unwrap_err();
        assert_eq!(
            err,
            EmbedError::EmptyText {
                owner_id: "x".into(),
                chunk_index: 3
            }
        );
    }

    #[test]
    fn store_rejects_bad_vectors() {
        let mut s = EmbeddingStore::new(2).unwrap();
        assert!(matches!(s.insert("a", 0, vec![1.0]), Err(EmbedError::DimMismatch { .. })));
        assert!(matches!(s.insert("a", 0, vec![0.0, 0.0]), Err(EmbedError::Degenerate { .. })));
        assert!(matches!(s.insert("a", 0, vec![f32::NAN, 1.0]), Err(EmbedError::Degenerate { .. })));
        s.insert("a", 1, vec![3.0, 4.0]).unwrap();
        s.insert("a", 0, vec![0.0, 2.0]).unwrap();
        s.insert("ab", 0, vec![1.0, 0.0]).unwrap();
        let chunks = s.chunks("a");
        assert_eq!(chunks, vec![&[0.0f32, 1.0][..], &[0.6f32, 0.8][..]]);
    }

    #[test]
    fn provider_dim_must_match_store() {
        let mut s = EmbeddingStore::new(4).unwrap();
        let e = HashEmbedder::new(8, 0).unwrap();
        assert!(matches!(
            embed_into(&mut s, &[EmbedInput::new("a", 0, "x")], &e),
            Err(EmbedError::DimMismatch { .. })
        ));
    }
}
