//! Ranked runs, relevance labels and recall@k.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Query id to relevant doc ids.
pub type Qrels = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("query {0} is missing from qrels")]
    MissingQrels(String),
    #[error("query {0} has no relevant documents")]
    NoRelevant(String),
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("run is empty")]
    EmptyRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Descending score, ties by ascending doc id.
pub fn ranking_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Sorts into ranking order and keeps the first `k` (all when `k` is None).
pub fn rank(mut docs: Vec<ScoredDoc>, k: Option<usize>) -> Vec<ScoredDoc> {
    docs.sort_by(ranking_order);
    if let Some(k) = k {
        docs.truncate(k);
    }
    docs
}

/// Query id to its ranked list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalRun {
    pub results: BTreeMap<String, Vec<ScoredDoc>>,
}

impl RetrievalRun {
    pub fn insert(&mut self, query_id: impl Into<String>, ranked: Vec<ScoredDoc>) {
        self.results.insert(query_id.into(), ranked);
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }
}

/// Fraction of relevant docs within the first `k` of `ranked`.
pub fn recall_single(ranked: &[ScoredDoc], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|d| relevant.contains(&d.doc_id))
        .count();
    hits as f64 / relevant.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallTable {
    pub ks: Vec<usize>,
    /// Macro-averaged recall per cutoff, aligned with `ks`.
    pub mean: Vec<f64>,
    pub per_query: BTreeMap<String, Vec<f64>>,
}

impl RecallTable {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.mean[i])
    }
}

/// Per-query recall at each cutoff, macro-averaged over the run's queries.
pub fn recall_at_k(run: &RetrievalRun, qrels: &Qrels, ks: &[usize]) -> Result<RecallTable, EvalError> {
    if ks.contains(&0) {
        return Err(EvalError::ZeroCutoff);
    }
    if run.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let mut per_query = BTreeMap::new();
    let mut sums = alloc::vec![0.0; ks.len()];
    for (qid, ranked) in &run.results {
        let relevant = qrels.get(qid).ok_or_else(|| EvalError::MissingQrels(qid.clone()))?;
        if relevant.is_empty() {
            return Err(EvalError::NoRelevant(qid.clone()));
        }
        let row: Vec<f64> = ks.iter().map(|&k| recall_single(ranked, relevant, k)).collect();
        for (s, r) in sums.iter_mut().zip(&row) {
            *s += r;
        }
        per_query.insert(qid.clone(), row);
    }
    let n = run.len() as f64;
    Ok(RecallTable {
        ks: ks.to_vec(),
        mean: sums.into_iter().map(|s| s / n).collect(),
        per_query,
    })
}

/// Averages augmentation-level recall rows per source query first, then
/// over queries. `source_of` maps augmentation id to source query id.
pub fn recall_per_source_first(table: &RecallTable, source_of: &BTreeMap<String, String>) -> RecallTable {
    let mut grouped: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (aug, row) in &table.per_query {
        let src = source_of.get(aug).cloned().unwrap_or_else(|| aug.clone());
        let e = grouped
            .entry(src)
            .or_insert_with(|| (alloc::vec![0.0; row.len()], 0));
        for (s, r) in e.0.iter_mut().zip(row) {
            *s += r;
        }
        e.1 += 1;
    }
    let per_query: BTreeMap<String, Vec<f64>> = grouped
        .into_iter()
        .map(|(q, (s, c))| (q, s.into_iter().map(|x| x / c as f64).collect()))
        .collect();
    let n = per_query.len().max(1) as f64;
    let mut mean = alloc::vec![0.0; table.ks.len()];
    for row in per_query.values() {
        for (m, r) in mean.iter_mut().zip(row) {
            *m += r;
        }
    }
    RecallTable {
        ks: table.ks.clone(),
        mean: mean.into_iter().map(|m| m / n).collect(),
        per_query,
    }
}
