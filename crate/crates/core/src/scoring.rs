//! Passage-based dense scoring of a chunked query against a chunked document.
//!
//! With `sim(i, j)` the cosine of query chunk `i` and document chunk `j`:
//!
//! | method            | score                      |
//! |-------------------|----------------------------|
//! | `FirstP`          | `sim(0, 0)`                |
//! | `MaxP`            | `max_j sim(0, j)`          |
//! | `SumP`            | `sum_j sim(0, j)`          |
//! | `LateInteraction` | `sum_i max_j sim(i, j)`    |
//! | `GlobalMax`       | `max_{i,j} sim(i, j)`      |
//!
//! The single-vector methods use the first query chunk as the query
//! representation and vary only the document-side aggregation. `FirstP` and
//! `SumP` therefore depend on query chunk order; `GlobalMax` and
//! `LateInteraction` are invariant to permutations of either side.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embed::{doc_owner, dot, EmbeddingStore};
use crate::eval::{rank, Qrels, RetrievalRun, ScoredDoc};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("query has no chunks")]
    EmptyQuery,
    #[error("document has no chunks")]
    EmptyDocument,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("similarity matrix rows have unequal lengths")]
    Ragged,
    #[error("missing embeddings for: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    FirstP,
    MaxP,
    SumP,
    LateInteraction,
    #[default]
    GlobalMax,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 5] = [
        ScoreMethod::FirstP,
        ScoreMethod::MaxP,
        ScoreMethod::SumP,
        ScoreMethod::LateInteraction,
        ScoreMethod::GlobalMax,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreMethod::FirstP => "firstp",
            ScoreMethod::MaxP => "maxp",
            ScoreMethod::SumP => "sump",
            ScoreMethod::LateInteraction => "late_interaction",
            ScoreMethod::GlobalMax => "globalmax",
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "firstp" => Ok(ScoreMethod::FirstP),
            "maxp" => Ok(ScoreMethod::MaxP),
            "sump" => Ok(ScoreMethod::SumP),
            "lateinteraction" | "li" => Ok(ScoreMethod::LateInteraction),
            "globalmax" | "gm" => Ok(ScoreMethod::GlobalMax),
            _ => Err(alloc::format!("unknown scoring method {s:?}")),
        }
    }
}

/// Aggregates a query-chunk by document-chunk similarity matrix.
pub fn score_matrix(sims: &[Vec<f64>], method: ScoreMethod) -> Result<f64, ScoreError> {
    let first = sims.first().ok_or(ScoreError::EmptyQuery)?;
    if first.is_empty() {
        return Err(ScoreError::EmptyDocument);
    }
    if sims.iter().any(|row| row.len() != first.len()) {
        return Err(ScoreError::Ragged);
    }
    let row_max = |row: &Vec<f64>| row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(match method {
        ScoreMethod::FirstP => first[0],
        ScoreMethod::MaxP => row_max(first),
        ScoreMethod::SumP => first.iter().sum(),
        ScoreMethod::LateInteraction => sims.iter().map(row_max).sum(),
        ScoreMethod::GlobalMax => sims.iter().map(row_max).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Dot-product similarity matrix of unit vectors.
pub fn similarity_matrix<Q: AsRef<[f32]>, D: AsRef<[f32]>>(
    query_chunks: &[Q],
    doc_chunks: &[D],
) -> Result<Vec<Vec<f64>>, ScoreError> {
    if query_chunks.is_empty() {
        return Err(ScoreError::EmptyQuery);
    }
    if doc_chunks.is_empty() {
        return Err(ScoreError::EmptyDocument);
    }
    let dim = query_chunks[0].as_ref().len();
    for v in query_chunks.iter().map(AsRef::as_ref).chain(doc_chunks.iter().map(AsRef::as_ref)) {
        if v.len() != dim {
            return Err(ScoreError::DimMismatch(dim, v.len()));
        }
    }
    Ok(query_chunks
        .iter()
        .map(|q| doc_chunks.iter().map(|d| dot(q.as_ref(), d.as_ref())).collect())
        .collect())
}

pub fn score<Q: AsRef<[f32]>, D: AsRef<[f32]>>(
    query_chunks: &[Q],
    doc_chunks: &[D],
    method: ScoreMethod,
) -> Result<f64, ScoreError> {
    if method == ScoreMethod::FirstP || method == ScoreMethod::MaxP || method == ScoreMethod::SumP {
        // Only the first query chunk matters.
        let sims = similarity_matrix(&query_chunks[..query_chunks.len().min(1)], doc_chunks)?;
        return score_matrix(&sims, method);
    }
    score_matrix(&similarity_matrix(query_chunks, doc_chunks)?, method)
}

/// Ranks every corpus document for one query representation. Document
/// vectors are looked up under [`doc_owner`].
pub fn rank_documents<Q: AsRef<[f32]>>(
    query_chunks: &[Q],
    store: &EmbeddingStore,
    doc_ids: &[&str],
    method: ScoreMethod,
    k: Option<usize>,
) -> Result<Vec<ScoredDoc>, ScoreError> {
    let mut scored = Vec::with_capacity(doc_ids.len());
    for &doc_id in doc_ids {
        let chunks = store.chunks(&doc_owner(doc_id));
        if chunks.is_empty() {
            return Err(ScoreError::MissingEmbeddings(alloc::vec![String::from(doc_id)]));
        }
        scored.push(ScoredDoc {
            doc_id: doc_id.into(),
            score: score(query_chunks, &chunks, method)?,
        });
    }
    Ok(rank(scored, k))
}

/// A query side for dense evaluation: an id whose chunk vectors live in the
/// store under `owner_id`, judged against `relevant`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseQuery {
    pub query_id: String,
    pub owner_id: String,
    pub relevant: BTreeSet<String>,
}

/// Checks that every query owner and every corpus document has vectors.
pub fn missing_embeddings(store: &EmbeddingStore, corpus: &Corpus, queries: &[DenseQuery]) -> Vec<String> {
    let mut missing: Vec<String> = queries
        .iter()
        .filter(|q| !store.contains_owner(&q.owner_id))
        .map(|q| q.owner_id.clone())
        .collect();
    missing.extend(
        corpus
            .documents()
            .iter()
            .map(|d| doc_owner(&d.doc_id))
            .filter(|o| !store.contains_owner(o)),
    );
    missing
}

/// Ranks all documents for every query and returns the run with its qrels.
pub fn dense_run(
    store: &EmbeddingStore,
    corpus: &Corpus,
    queries: &[DenseQuery],
    method: ScoreMethod,
    depth: Option<usize>,
) -> Result<(RetrievalRun, Qrels), ScoreError> {
    let missing = missing_embeddings(store, corpus, queries);
    if !missing.is_empty() {
        return Err(ScoreError::MissingEmbeddings(missing));
    }
    let doc_ids: Vec<&str> = corpus.documents().iter().map(|d| d.doc_id.as_str()).collect();
    let mut run = RetrievalRun::default();
    let mut qrels = Qrels::new();
    for q in queries {
        let chunks = store.chunks(&q.owner_id);
        run.insert(q.query_id.clone(), rank_documents(&chunks, store, &doc_ids, method, depth)?);
        qrels.insert(q.query_id.clone(), q.relevant.clone());
    }
    Ok((run, qrels))
}
