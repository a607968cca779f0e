//! Documents, queries, relevance labels and length statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::token_count;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("document id is empty")]
    EmptyDocId,
    #[error("document {0} has empty text")]
    EmptyDocText(String),
    #[error("duplicate document id {0}")]
    DuplicateDoc(String),
    #[error("query id is empty")]
    EmptyQueryId,
    #[error("query {0} has empty text")]
    EmptyQueryText(String),
    #[error("duplicate query id {0}")]
    DuplicateQuery(String),
    #[error("query {0} has no positives")]
    NoPositives(String),
    #[error("query {query_id} references unknown document {doc_id}")]
    DanglingPositive { query_id: String, doc_id: String },
    #[error("corpus is empty")]
    Empty,
    #[error("section count must be positive")]
    ZeroSections,
    #[error("cannot sample {requested} queries from {available}")]
    SampleTooLarge { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub token_count: usize,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            doc_id: doc_id.into(),
            token_count: token_count(&text),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    pub positives: BTreeSet<String>,
    pub token_count: usize,
}

impl Query {
    pub fn new<I, S>(query_id: impl Into<String>, text: impl Into<String>, positives: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let text = text.into();
        Self {
            query_id: query_id.into(),
            token_count: token_count(&text),
            text,
            positives: positives.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    #[default]
    Test,
}

/// A validated corpus. Documents and queries are kept sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    pub name: String,
    pub split: Split,
    documents: Vec<Document>,
    queries: Vec<Query>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        mut documents: Vec<Document>,
        mut queries: Vec<Query>,
    ) -> Result<Self, CorpusError> {
        documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        queries.sort_by(|a, b| a.query_id.cmp(&b.query_id));

        for pair in documents.windows(2) {
            if pair[0].doc_id == pair[1].doc_id {
                return Err(CorpusError::DuplicateDoc(pair[0].doc_id.clone()));
            }
        }
        for doc in &documents {
            if doc.doc_id.is_empty() {
                return Err(CorpusError::EmptyDocId);
            }
            if doc.text.trim().is_empty() {
                return Err(CorpusError::EmptyDocText(doc.doc_id.clone()));
            }
        }
        for pair in queries.windows(2) {
            if pair[0].query_id == pair[1].query_id {
                return Err(CorpusError::DuplicateQuery(pair[0].query_id.clone()));
            }
        }
        for q in &queries {
            if q.query_id.is_empty() {
                return Err(CorpusError::EmptyQueryId);
            }
            if q.text.trim().is_empty() {
                return Err(CorpusError::EmptyQueryText(q.query_id.clone()));
            }
            if q.positives.is_empty() {
                return Err(CorpusError::NoPositives(q.query_id.clone()));
            }
            for p in &q.positives {
                if documents.binary_search_by(|d| d.doc_id.as_str().cmp(p)).is_err() {
                    return Err(CorpusError::DanglingPositive {
                        query_id: q.query_id.clone(),
                        doc_id: p.clone(),
                    });
                }
            }
        }
        Ok(Self {
            name: name.into(),
            split,
            documents,
            queries,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn query(&self, query_id: &str) -> Option<&Query> {
        self.queries
            .binary_search_by(|q| q.query_id.as_str().cmp(query_id))
            .ok()
            .map(|i| &self.queries[i])
    }

    /// Relevance labels as query id to positive doc ids.
    pub fn qrels(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.queries
            .iter()
            .map(|q| (q.query_id.clone(), q.positives.clone()))
            .collect()
    }

    /// Keeps `n` queries chosen uniformly without replacement. Documents are
    /// untouched. Returns the kept query ids in ascending order.
    pub fn sample_queries(&mut self, n: usize, seed: u64) -> Result<Vec<String>, CorpusError> {
        if n > self.queries.len() {
            return Err(CorpusError::SampleTooLarge {
                requested: n,
                available: self.queries.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, self.queries.len(), n).into_vec();
        picked.sort_unstable();
        let keep: BTreeSet<usize> = picked.into_iter().collect();
        let mut i = 0;
        self.queries.retain(|_| {
            let kept = keep.contains(&i);
            i += 1;
            kept
        });
        Ok(self.queries.iter().map(|q| q.query_id.clone()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub min: usize,
    pub max: usize,
    pub avg: f64,
    pub median: f64,
}

impl LengthStats {
    pub fn from_counts(counts: &[usize]) -> Option<Self> {
        if counts.is_empty() {
            return None;
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let sum: u64 = sorted.iter().map(|&c| c as u64).sum();
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        Some(Self {
            count: n,
            min: sorted[0],
            max: sorted[n - 1],
            avg: sum as f64 / n as f64,
            median,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: LengthStats,
    pub queries: Option<LengthStats>,
    /// Per-section query counts when sectioned.
    pub query_sections: Option<Vec<usize>>,
}

pub fn stats(corpus: &Corpus, sections: Option<usize>) -> Result<CorpusStats, CorpusError> {
    let doc_counts: Vec<usize> = corpus.documents.iter().map(|d| d.token_count).collect();
    let documents = LengthStats::from_counts(&doc_counts).ok_or(CorpusError::Empty)?;
    let query_counts: Vec<usize> = corpus.queries.iter().map(|q| q.token_count).collect();
    let queries = LengthStats::from_counts(&query_counts);
    let query_sections = match sections {
        Some(s) if !query_counts.is_empty() => {
            Some(ranked_sections(&query_counts, s)?.iter().map(Vec::len).collect())
        }
        _ => None,
    };
    Ok(CorpusStats {
        documents,
        queries,
        query_sections,
    })
}

/// Orders items by length (ties by position) and cuts them into ranked
/// sections of `ceil(n / sections)` items; the last section may be smaller
/// and trailing empty sections are dropped. Returns item positions per
/// section, section 0 holding the shortest items.
pub fn ranked_sections(lengths: &[usize], sections: usize) -> Result<Vec<Vec<usize>>, CorpusError> {
    if sections == 0 {
        return Err(CorpusError::ZeroSections);
    }
    if lengths.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    let size = lengths.len().div_ceil(sections);
    Ok(order.chunks(size).map(<[usize]>::to_vec).collect())
}
