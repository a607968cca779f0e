//! Word/punctuation tokenizer.
//!
//! The default tokenizer splits text into maximal runs of alphanumeric
//! characters (Unicode `Alphabetic` or `Numeric`) and emits every other
//! non-whitespace character as a single-character punctuation token.
//! Surfaces are lowercased. Each token keeps the byte span it was cut from so
//! chunk texts can be sliced from the source without re-joining tokens.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Number,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased surface form, never empty.
    pub surface: String,
    pub kind: TokenKind,
    /// Byte span in the source text.
    pub span: Range<usize>,
}

/// Pluggable tokenizer. Every token count in the pipeline goes through one.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<Token>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }

    fn surfaces(&self, text: &str) -> Vec<String> {
        self.tokenize(text).into_iter().map(|t| t.surface).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WordPunctTokenizer;

impl Tokenizer for WordPunctTokenizer {
    fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut tokens = Vec::new();
        let mut run_start: Option<usize> = None;

        for (pos, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if run_start.is_none() {
                    run_start = Some(pos);
                }
                continue;
            }
            if let Some(start) = run_start.take() {
                tokens.push(word_token(text, start..pos));
            }
            if !ch.is_whitespace() {
                let end = pos + ch.len_utf8();
                tokens.push(Token {
                    surface: lowercase(&text[pos..end]),
                    kind: TokenKind::Punct,
                    span: pos..end,
                });
            }
        }
        if let Some(start) = run_start {
            tokens.push(word_token(text, start..text.len()));
        }
        tokens
    }
}

fn word_token(text: &str, span: Range<usize>) -> Token {
    let raw = &text[span.clone()];
    let kind = if raw.chars().all(char::is_numeric) {
        TokenKind::Number
    } else {
        TokenKind::Word
    };
    Token {
        surface: lowercase(raw),
        kind,
        span,
    }
}

fn lowercase(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

/// Tokenizes with the default [`WordPunctTokenizer`].
pub fn tokenize(text: &str) -> Vec<Token> {
    WordPunctTokenizer.tokenize(text)
}

/// Token count under the default tokenizer.
pub fn token_count(text: &str) -> usize {
    WordPunctTokenizer.count(text)
}
