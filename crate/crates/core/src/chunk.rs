//! Token-aligned sliding-window chunking.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::{Token, Tokenizer, WordPunctTokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("chunk size must be positive")]
    ZeroSize,
    #[error("overlap {overlap} must be smaller than chunk size {size}")]
    OverlapTooLarge { size: usize, overlap: usize },
}

/// Window size and overlap, both in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    chunk_size: usize,
    overlap: usize,
}

impl ChunkPolicy {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, ChunkError> {
        if chunk_size == 0 {
            return Err(ChunkError::ZeroSize);
        }
        if overlap >= chunk_size {
            return Err(ChunkError::OverlapTooLarge {
                size: chunk_size,
                overlap,
            });
        }
        Ok(Self {
            chunk_size,
            overlap,
        })
    }

    /// A policy that never splits: one window covering any text.
    pub fn whole() -> Self {
        Self {
            chunk_size: usize::MAX,
            overlap: 0,
        }
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }

    /// Token windows `[start, end)` for a text of `n_tokens` tokens.
    pub fn windows(&self, n_tokens: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if n_tokens == 0 {
            return out;
        }
        let mut start = 0usize;
        loop {
            let end = start.saturating_add(self.chunk_size).min(n_tokens);
            out.push((start, end));
            if end == n_tokens {
                break;
            }
            start += self.stride();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub parent_id: String,
    pub index: usize,
    pub token_start: usize,
    /// Exclusive.
    pub token_end: usize,
    /// Source slice from the first token's start to the last token's end.
    pub text: String,
}

/// Chunks `text` with the default tokenizer. A text without tokens yields no
/// chunks.
pub fn chunk(parent_id: &str, text: &str, policy: &ChunkPolicy) -> Vec<Chunk> {
    chunk_with(&WordPunctTokenizer, parent_id, text, policy)
}

pub fn chunk_with<T: Tokenizer + ?Sized>(
    tokenizer: &T,
    parent_id: &str,
    text: &str,
    policy: &ChunkPolicy,
) -> Vec<Chunk> {
    let tokens = tokenizer.tokenize(text);
    chunk_tokens(parent_id, text, &tokens, policy)
}

/// Chunks an already tokenized text. `tokens` must have been produced from
/// `text`.
pub fn chunk_tokens(parent_id: &str, text: &str, tokens: &[Token], policy: &ChunkPolicy) -> Vec<Chunk> {
    policy
        .windows(tokens.len())
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Chunk {
            parent_id: String::from(parent_id),
            index,
            token_start: start,
            token_end: end,
            text: String::from(&text[tokens[start].span.start..tokens[end - 1].span.end]),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn policy_validation() {
        assert_eq!(ChunkPolicy::new(0, 0), Err(ChunkError::ZeroSize));
        assert!(matches!(ChunkPolicy::new(10, 10), Err(ChunkError::OverlapTooLarge { .. })));
        assert_eq!(ChunkPolicy::new(512, 80).unwrap().stride(), 432);
    }

    #[test]
    fn thousand_tokens_three_windows() {
        let p = ChunkPolicy::new(512, 80).unwrap();
        let chunks = chunk("d", &words(1000), &p);
        let starts: Vec<_> = chunks.iter().map(|c| c.token_start).collect();
        assert_eq!(starts, vec![0, 432, 864]);
        assert_eq!(chunks[2].token_end, 1000);
    }

    #[test]
    fn short_text_is_single_chunk() {
        let p = ChunkPolicy::new(512, 80).unwrap();
        let text = words(500);
        let chunks = chunk("d", &text, &p);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, text);
    }

    #[test]
    fn exact_fit_stops_without_tail() {
        let p = ChunkPolicy::new(512, 80).unwrap();
        let chunks = chunk("d", &words(944), &p);
        assert_eq!(chunks.len(), 2);
        assert_eq!((chunks[0].token_start, chunks[0].token_end), (0, 512));
        assert_eq!((chunks[1].token_start, chunks[1].token_end), (432, 944));
    }

    #[test]
    fn empty_text_has_no_chunks() {
        assert!(chunk("d", "  ", &ChunkPolicy::new(4, 1).unwrap()).is_empty());
    }

    #[test]
    fn chunk_text_is_source_slice() {
        let p = ChunkPolicy::new(3, 1).unwrap();
        let chunks = chunk("q", "Smith v. Jones, 12 F.3d", &p);
        assert_eq!(chunks[0].text, "Smith v.");
        assert_eq!(chunks[1].text, ". Jones,");
        assert_eq!(chunks.last().unwrap().token_end, 9);
    }
}
