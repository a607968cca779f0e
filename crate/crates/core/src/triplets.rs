//! Training triplet construction for retriever fine-tuning.
//!
//! Original queries contribute anchors from their best query-chunk /
//! positive-chunk pairs under the baseline embeddings; augmentations
//! contribute one anchor each, paired with the positive chunk closest to them.
//! Negatives are the top BM25 non-positive (or a seeded random non-positive).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentedQuery, Method};
use crate::bm25::InvertedIndex;
use crate::chunk::Chunk;
use crate::corpus::Corpus;
use crate::embed::{aug_owner, doc_owner, dot, query_owner, EmbeddingStore};
use crate::eval::rank;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TripletError {
    #[error("missing embedding for {owner_id}#{chunk_index}")]
    MissingEmbedding { owner_id: String, chunk_index: usize },
    #[error("missing chunk text for {owner_id}#{chunk_index}")]
    MissingChunk { owner_id: String, chunk_index: usize },
    #[error("unknown source query {0}")]
    UnknownQuery(String),
    #[error("pool holds {available} triplets but {needed} were requested")]
    InsufficientPool { needed: usize, available: usize },
    #[error("no negative candidate for anchor of {0}")]
    NoNegative(String),
    #[error("hard negatives need a BM25 index")]
    MissingIndex,
    #[error("pair count i must be at least 1")]
    ZeroPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    OriginalChunk,
    Augmentation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_query_id: String,
    pub anchor_kind: AnchorKind,
    /// Query chunk index for original anchors, augmentation id otherwise.
    pub anchor_ref: String,
    #[serde(default)]
    pub persona_id: Option<String>,
    pub positive_doc_id: String,
    pub positive_chunk_index: usize,
    pub negative_doc_id: String,
    pub negative_chunk_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor_text: String,
    pub positive_text: String,
    pub negative_text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigName {
    Baseline,
    Original,
    VanillaOnly,
    VanillaMix,
    PersonaOnly,
    PersonaMix,
}

impl ConfigName {
    pub const ALL: [ConfigName; 6] = [
        ConfigName::Baseline,
        ConfigName::Original,
        ConfigName::VanillaOnly,
        ConfigName::VanillaMix,
        ConfigName::PersonaOnly,
        ConfigName::PersonaMix,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConfigName::Baseline => "baseline",
            ConfigName::Original => "original",
            ConfigName::VanillaOnly => "vanilla_only",
            ConfigName::VanillaMix => "vanilla_mix",
            ConfigName::PersonaOnly => "persona_only",
            ConfigName::PersonaMix => "persona_mix",
        }
    }

    /// Augmentation method this configuration draws on.
    pub fn method(&self) -> Option<Method> {
        match self {
            ConfigName::VanillaOnly | ConfigName::VanillaMix => Some(Method::Vanilla),
            ConfigName::PersonaOnly | ConfigName::PersonaMix => Some(Method::Persona),
            _ => None,
        }
    }

    pub fn is_mix(&self) -> bool {
        matches!(self, ConfigName::VanillaMix | ConfigName::PersonaMix)
    }
}

impl FromStr for ConfigName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.replace('-', "_");
        ConfigName::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown training configuration {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePolicy {
    #[default]
    Bm25Hard,
    Random,
}

impl FromStr for NegativePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "bm25_hard" => Ok(NegativePolicy::Bm25Hard),
            "random" => Ok(NegativePolicy::Random),
            other => Err(format!("unknown negative policy {other:?}")),
        }
    }
}

/// How anchors and positives are cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStyle {
    /// Long queries: query chunks paired with positive chunks.
    #[default]
    Chunked,
    /// Short queries: whole query, positives truncated to their first chunk.
    Whole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub name: ConfigName,
    /// Mix configurations only; defaults to the augmentation pool size.
    pub target_size: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(name: ConfigName) -> Self {
        Self {
            name,
            target_size: None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkPair {
    pub query_chunk: usize,
    pub doc_id_index: usize,
    pub doc_chunk: usize,
    pub sim: f64,
}

/// Inputs shared by every triplet build.
pub struct TripletSources<'a> {
    pub corpus: &'a Corpus,
    /// Chunks by parent query id, in chunk order.
    pub query_chunks: &'a BTreeMap<String, Vec<Chunk>>,
    /// Chunks by parent doc id, in chunk order.
    pub doc_chunks: &'a BTreeMap<String, Vec<Chunk>>,
    pub augmentations: &'a [AugmentedQuery],
    /// Baseline (pre-fine-tuning) embeddings of all of the above, under
    /// the namespaced owner ids of [`crate::embed`].
    pub store: &'a EmbeddingStore,
    pub index: Option<&'a InvertedIndex>,
    pub style: AnchorStyle,
}

fn vector<'s>(store: &'s EmbeddingStore, owner: &str, idx: usize) -> Result<&'s [f32], TripletError> {
    store.get(owner, idx).ok_or_else(|| TripletError::MissingEmbedding {
        owner_id: owner.into(),
        chunk_index: idx,
    })
}

fn pair_order(a: &ChunkPair, b: &ChunkPair) -> Ordering {
    b.sim
        .partial_cmp(&a.sim)
        .unwrap_or(Ordering::Equal)
        .then(a.query_chunk.cmp(&b.query_chunk))
        .then(a.doc_id_index.cmp(&b.doc_id_index))
        .then(a.doc_chunk.cmp(&b.doc_chunk))
}

/// Selects query-chunk / positive-chunk pairs by baseline cosine.
///
/// `positive_chunks[d]` lists the candidate chunk vectors of positive `d`
/// (pairs report `doc_id_index = d`). With at least `i` query chunks the
/// global top `i` pairs are returned. With fewer, every query chunk is used
/// once, paired with its best positive chunk, with no repetition or padding.
pub fn select_chunk_pairs<Q: AsRef<[f32]>, D: AsRef<[f32]>>(
    query_chunks: &[Q],
    positive_chunks: &[Vec<D>],
    i: usize,
) -> Result<Vec<ChunkPair>, TripletError> {
    if i == 0 {
        return Err(TripletError::ZeroPairs);
    }
    let mut all = Vec::new();
    for (qa, q) in query_chunks.iter().enumerate() {
        for (d, chunks) in positive_chunks.iter().enumerate() {
            for (b, v) in chunks.iter().enumerate() {
                all.push(ChunkPair {
                    query_chunk: qa,
                    doc_id_index: d,
                    doc_chunk: b,
                    sim: dot(q.as_ref(), v.as_ref()),
                });
            }
        }
    }
    all.sort_by(pair_order);
    if query_chunks.len() >= i {
        all.truncate(i);
        return Ok(all);
    }
    let mut seen = BTreeSet::new();
    all.retain(|p| seen.insert(p.query_chunk));
    Ok(all)
}

struct Anchor<'a> {
    source_query_id: &'a str,
    kind: AnchorKind,
    anchor_ref: String,
    persona_id: Option<String>,
    text: String,
    vector: &'a [f32],
    positive: (String, usize),
}

impl<'a> TripletSources<'a> {
    fn chunk_text(&self, map: &BTreeMap<String, Vec<Chunk>>, owner: &str, idx: usize) -> Result<String, TripletError> {
        map.get(owner)
            .and_then(|cs| cs.get(idx))
            .map(|c| c.text.clone())
            .ok_or_else(|| TripletError::MissingChunk {
                owner_id: owner.into(),
                chunk_index: idx,
            })
    }

    /// Candidate chunk vectors of a document under the anchor style.
    fn doc_vectors(&self, doc_id: &str) -> Result<Vec<&'a [f32]>, TripletError> {
        let owner = doc_owner(doc_id);
        let chunks = self.store.chunks(&owner);
        if chunks.is_empty() {
            return Err(TripletError::MissingEmbedding {
                owner_id: owner,
                chunk_index: 0,
            });
        }
        Ok(match self.style {
            AnchorStyle::Chunked => chunks,
            AnchorStyle::Whole => chunks[..1].to_vec(),
        })
    }

    fn best_chunk(&self, anchor: &[f32], doc_id: &str) -> Result<(usize, f64), TripletError> {
        let vs = self.doc_vectors(doc_id)?;
        let mut best = (0usize, f64::NEG_INFINITY);
        for (j, v) in vs.iter().enumerate() {
            let s = dot(anchor, v);
            if s > best.1 {
                best = (j, s);
            }
        }
        Ok(best)
    }

    fn positives(&self, query_id: &str) -> Result<Vec<&'a str>, TripletError> {
        let q = self
            .corpus
            .query(query_id)
            .ok_or_else(|| TripletError::UnknownQuery(query_id.into()))?;
        Ok(q.positives.iter().map(String::as_str).collect())
    }

    fn original_anchors(&self, query_id: &'a str, i: usize) -> Result<Vec<Anchor<'a>>, TripletError> {
        let positives = self.positives(query_id)?;
        let owner = query_owner(query_id);
        let qvecs = self.store.chunks(&owner);
        if qvecs.is_empty() {
            return Err(TripletError::MissingEmbedding {
                owner_id: owner,
                chunk_index: 0,
            });
        }
        let mut pos_vecs = Vec::with_capacity(positives.len());
        for p in &positives {
            pos_vecs.push(self.doc_vectors(p)?);
        }
        let pairs = match self.style {
            AnchorStyle::Chunked => select_chunk_pairs(&qvecs, &pos_vecs, i)?,
            // One anchor: the whole query with its best positive.
            AnchorStyle::Whole => select_chunk_pairs(&qvecs[..1], &pos_vecs, 1)?,
        };
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            let doc_id = positives[p.doc_id_index];
            let text = match self.style {
                AnchorStyle::Chunked => self.chunk_text(self.query_chunks, query_id, p.query_chunk)?,
                AnchorStyle::Whole => self
                    .corpus
                    .query(query_id)
                    .map(|q| q.text.clone())
                    .unwrap_or_default(),
            };
            out.push(Anchor {
                source_query_id: query_id,
                kind: AnchorKind::OriginalChunk,
                anchor_ref: format!("{}", p.query_chunk),
                persona_id: None,
                text,
                vector: qvecs[p.query_chunk],
                positive: (doc_id.into(), p.doc_chunk),
            });
        }
        Ok(out)
    }

    fn augmentation_anchor(&self, aug: &'a AugmentedQuery) -> Result<Anchor<'a>, TripletError> {
        let v = vector(self.store, &aug_owner(&aug.aug_id), 0)?;
        let positives = self.positives(&aug.source_query_id)?;
        let mut best: Option<(&str, usize, f64)> = None;
        for p in positives {
            let (j, s) = self.best_chunk(v, p)?;
            if best.is_none_or(|(_, _, bs)| s > bs) {
                best = Some((p, j, s));
            }
        }
        let (doc, chunk, _) = best.ok_or_else(|| TripletError::UnknownQuery(aug.source_query_id.clone()))?;
        Ok(Anchor {
            source_query_id: &aug.source_query_id,
            kind: AnchorKind::Augmentation,
            anchor_ref: aug.aug_id.clone(),
            persona_id: aug.persona_id.clone(),
            text: aug.text.clone(),
            vector: v,
            positive: (doc.into(), chunk),
        })
    }

    fn negative(
        &self,
        anchor: &Anchor<'_>,
        policy: NegativePolicy,
        rng: &mut ChaCha8Rng,
    ) -> Result<(String, usize), TripletError> {
        let positives: BTreeSet<&str> = self.positives(anchor.source_query_id)?.into_iter().collect();
        let doc_id: String = match policy {
            NegativePolicy::Bm25Hard => {
                let index = self.index.ok_or(TripletError::MissingIndex)?;
                // Documents sharing no term with the anchor score zero and
                // rank after every match, by ascending id.
                rank(index.score_all(&anchor.text), None)
                    .into_iter()
                    .map(|d| d.doc_id)
                    .chain(index.doc_ids().iter().cloned())
                    .find(|d| !positives.contains(d.as_str()))
                    .ok_or_else(|| TripletError::NoNegative(anchor.source_query_id.into()))?
            }
            NegativePolicy::Random => {
                let candidates: Vec<&str> = self
                    .corpus
                    .documents()
                    .iter()
                    .map(|d| d.doc_id.as_str())
                    .filter(|d| !positives.contains(d))
                    .collect();
                if candidates.is_empty() {
                    return Err(TripletError::NoNegative(anchor.source_query_id.into()));
                }
                candidates[rng.gen_range(0..candidates.len())].into()
            }
        };
        let (chunk, _) = self.best_chunk(anchor.vector, &doc_id)?;
        Ok((doc_id, chunk))
    }

    fn materialize(
        &self,
        anchors: Vec<Anchor<'_>>,
        policy: NegativePolicy,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Triplet>, TripletError> {
        let mut out = Vec::with_capacity(anchors.len());
        for a in anchors {
            let (neg_doc, neg_chunk) = self.negative(&a, policy, rng)?;
            let positive_text = self.chunk_text(self.doc_chunks, &a.positive.0, a.positive.1)?;
            let negative_text = self.chunk_text(self.doc_chunks, &neg_doc, neg_chunk)?;
            out.push(Triplet {
                anchor_text: a.text,
                positive_text,
                negative_text,
                provenance: Provenance {
                    source_query_id: a.source_query_id.into(),
                    anchor_kind: a.kind,
                    anchor_ref: a.anchor_ref,
                    persona_id: a.persona_id,
                    positive_doc_id: a.positive.0,
                    positive_chunk_index: a.positive.1,
                    negative_doc_id: neg_doc,
                    negative_chunk_index: neg_chunk,
                },
            });
        }
        Ok(out)
    }

    fn augmentations_of(&self, method: Method) -> Vec<&'a AugmentedQuery> {
        let mut augs: Vec<&AugmentedQuery> = self.augmentations.iter().filter(|a| a.method == method).collect();
        augs.sort_by(|a, b| {
            a.source_query_id
                .cmp(&b.source_query_id)
                .then_with(|| a.aug_id.cmp(&b.aug_id))
        });
        augs
    }

    /// Original-query triplets, at most `cap(query)` per query when given.
    pub fn original_pool(
        &self,
        i: usize,
        policy: NegativePolicy,
        rng: &mut ChaCha8Rng,
        cap: Option<&BTreeMap<&str, usize>>,
    ) -> Result<Vec<Triplet>, TripletError> {
        let mut anchors = Vec::new();
        for q in self.corpus.queries() {
            let mut a = self.original_anchors(&q.query_id, i)?;
            if let Some(cap) = cap {
                a.truncate(cap.get(q.query_id.as_str()).copied().unwrap_or(0));
            }
            anchors.extend(a);
        }
        self.materialize(anchors, policy, rng)
    }

    pub fn augmentation_pool(
        &self,
        method: Method,
        policy: NegativePolicy,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Triplet>, TripletError> {
        let anchors = self
            .augmentations_of(method)
            .into_iter()
            .map(|a| self.augmentation_anchor(a))
            .collect::<Result<Vec<_>, _>>()?;
        self.materialize(anchors, policy, rng)
    }
}

/// Builds the triplets of one training configuration.
pub fn build_triplets(
    sources: &TripletSources<'_>,
    config: &TrainConfig,
    negatives: NegativePolicy,
    i: usize,
) -> Result<Vec<Triplet>, TripletError> {
    if i == 0 {
        return Err(TripletError::ZeroPairs);
    }
    if negatives == NegativePolicy::Bm25Hard && sources.index.is_none() && config.name != ConfigName::Baseline {
        return Err(TripletError::MissingIndex);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match config.name {
        ConfigName::Baseline => Ok(Vec::new()),
        ConfigName::Original => sources.original_pool(i, negatives, &mut rng, None),
        ConfigName::VanillaOnly | ConfigName::PersonaOnly => {
            let method = config.name.method().expect("augmentation config");
            sources.augmentation_pool(method, negatives, &mut rng)
        }
        ConfigName::VanillaMix | ConfigName::PersonaMix => {
            let method = config.name.method().expect("augmentation config");
            let augs = sources.augmentation_pool(method, negatives, &mut rng)?;
            let mut per_query: BTreeMap<&str, usize> = BTreeMap::new();
            for t in &augs {
                *per_query.entry(t.provenance.source_query_id.as_str()).or_insert(0) += 1;
            }
            let originals = sources.original_pool(i, negatives, &mut rng, Some(&per_query))?;
            let target = config.target_size.unwrap_or(augs.len());
            let mut pool = originals;
            pool.extend(augs);
            sample_balanced(pool, target, &mut rng)
        }
    }
}

/// Samples `target` triplets uniformly, then swaps surplus original anchors
/// of any query for unselected augmentation anchors of the same query so no
/// query ends with more original than augmentation anchors. The result keeps
/// pool order.
pub fn sample_balanced(pool: Vec<Triplet>, target: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Triplet>, TripletError> {
    if target > pool.len() {
        return Err(TripletError::InsufficientPool {
            needed: target,
            available: pool.len(),
        });
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(rng);
    // rank_of[i] = position of pool item i in the shuffled order.
    let mut rank_of = alloc::vec![0usize; pool.len()];
    for (r, &i) in order.iter().enumerate() {
        rank_of[i] = r;
    }
    let mut selected: BTreeSet<usize> = order[..target].iter().copied().collect();

    let mut by_query: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, t) in pool.iter().enumerate() {
        let e = by_query.entry(t.provenance.source_query_id.as_str()).or_default();
        match t.provenance.anchor_kind {
            AnchorKind::OriginalChunk => e.0.push(i),
            AnchorKind::Augmentation => e.1.push(i),
        }
    }
    for (orig, augs) in by_query.values_mut() {
        orig.sort_by_key(|&i| core::cmp::Reverse(rank_of[i]));
        augs.sort_by_key(|&i| rank_of[i]);
        let count = |v: &Vec<usize>, s: &BTreeSet<usize>| v.iter().filter(|i| s.contains(i)).count();
        let mut drop_iter = orig.iter().filter(|i| selected.contains(i)).copied().collect::<Vec<_>>().into_iter();
        let mut add_iter = augs.iter().filter(|i| !selected.contains(i)).copied().collect::<Vec<_>>().into_iter();
        while count(orig, &selected) > count(augs, &selected) {
            match (drop_iter.next(), add_iter.next()) {
                (Some(d), Some(a)) => {
                    selected.remove(&d);
                    selected.insert(a);
                }
                _ => break,
            }
        }
    }
    Ok(pool
        .into_iter()
        .enumerate()
        .filter(|(i, _)| selected.contains(i))
        .map(|(_, t)| t)
        .collect())
}

/// Per-query anchor counts `(original, augmentation)`.
pub fn anchor_counts(triplets: &[Triplet]) -> BTreeMap<String, (usize, usize)> {
    let mut m: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for t in triplets {
        let e = m.entry(t.provenance.source_query_id.clone()).or_default();
        match t.provenance.anchor_kind {
            AnchorKind::OriginalChunk => e.0 += 1,
            AnchorKind::Augmentation => e.1 += 1,
        }
    }
    m
}
