//! Allocation-only core of the persona augmentation pipeline.
//!
//! Everything in this crate is pure computation over in-memory values:
//! tokenization and sliding-window chunking, corpus validation and length
//! statistics, the persona registry and prompt templates, the two-stage
//! augmentation driver (over an abstract [`augment::LlmClient`]), lexical and
//! semantic diversity metrics, BM25 retrieval, passage-based dense scoring,
//! recall evaluation and training-triplet construction.
//!
//! File formats, network clients and the command line live in the `daldall`
//! crate.
#![no_std]
#![forbid(unsafe_code)]
extern crate alloc;

pub mod augment;
pub mod bm25;
pub mod chunk;
pub mod corpus;
pub mod diversity;
pub mod embed;
pub mod eval;
pub mod persona;
pub mod prompt;
pub mod scoring;
pub mod tokenize;
pub mod triplets;

pub use chunk::{chunk, Chunk, ChunkPolicy};
pub use corpus::{Corpus, Document, Query, Split};
pub use tokenize::{tokenize, Token, TokenKind, Tokenizer, WordPunctTokenizer};
