//! Okapi BM25 over an in-memory inverted index.
//!
//! Scoring uses the non-negative IDF variant
//! `ln((N - df + 0.5) / (df + 0.5) + 1)` and the usual length-normalized
//! saturation `tf (k1 + 1) / (tf + k1 (1 - b + b |d| / avgdl))`. Query terms
//! contribute once per occurrence in the query.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::eval::{rank, ScoredDoc};
use crate::tokenize::{Tokenizer, WordPunctTokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Bm25Error {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("duplicate document id {0}")]
    DuplicateDoc(String),
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position in [`InvertedIndex::doc_ids`].
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    /// Sorted ascending; postings refer to positions here.
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
    params: Bm25Params,
}

impl InvertedIndex {
    /// Builds an index over `(doc_id, text)` pairs in any order.
    pub fn build<'a, I>(docs: I, params: Bm25Params) -> Result<Self, Bm25Error>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut docs: Vec<(&str, &str)> = docs.into_iter().collect();
        if docs.is_empty() {
            return Err(Bm25Error::EmptyCorpus);
        }
        docs.sort_by(|a, b| a.0.cmp(b.0));
        for w in docs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Bm25Error::DuplicateDoc(w[0].0.into()));
            }
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (pos, (_, text)) in docs.iter().enumerate() {
            let terms = WordPunctTokenizer.surfaces(text);
            doc_lengths.push(terms.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc: pos as u32,
                    tf: count,
                });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        Ok(Self {
            avg_doc_len: total as f64 / docs.len() as f64,
            doc_ids: docs.into_iter().map(|(id, _)| String::from(id)).collect(),
            doc_lengths,
            postings,
            params,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.position(doc_id).map(|p| self.doc_lengths[p] as usize)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    fn position(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.binary_search_by(|d| d.as_str().cmp(doc_id)).ok()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.num_docs() as f64;
        let df = df as f64;
        libm::log((n - df + 0.5) / (df + 0.5) + 1.0)
    }

    fn term_score(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * doc_len as f64 / self.avg_doc_len;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Scores every document containing at least one query term.
    pub fn score_all(&self, query_text: &str) -> Vec<ScoredDoc> {
        let mut acc = vec![0.0f64; self.num_docs()];
        let mut touched = vec![false; self.num_docs()];
        for term in WordPunctTokenizer.surfaces(query_text) {
            let plist = self.postings(&term);
            if plist.is_empty() {
                continue;
            }
            let idf = self.idf(plist.len());
            for p in plist {
                let d = p.doc as usize;
                acc[d] += self.term_score(idf, p.tf, self.doc_lengths[d]);
                touched[d] = true;
            }
        }
        acc.into_iter()
            .zip(touched)
            .enumerate()
            .filter(|(_, (_, t))| *t)
            .map(|(d, (score, _))| ScoredDoc {
                doc_id: self.doc_ids[d].clone(),
                score,
            })
            .collect()
    }

    /// Top `k` documents, descending score, ties by ascending doc id.
    pub fn search(&self, query_text: &str, k: usize) -> Result<Vec<ScoredDoc>, Bm25Error> {
        if k == 0 {
            return Err(Bm25Error::ZeroK);
        }
        Ok(rank(self.score_all(query_text), Some(k)))
    }
}

pub fn build_index(corpus: &Corpus, params: Bm25Params) -> Result<InvertedIndex, Bm25Error> {
    InvertedIndex::build(
        corpus
            .documents()
            .iter()
            .map(|d| (d.doc_id.as_str(), d.text.as_str())),
        params,
    )
}
