//! On-disk record formats: JSON lines, TREC qrels and runs, embedding files.
//!
//! The binary embedding layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "DALDEMB1"
//! dim          u32
//! count        u64
//! count records:
//!   owner_len  u32
//!   owner_id   owner_len bytes, UTF-8
//!   chunk_idx  u32
//!   vector     dim x f32
//! ```
//!
//! The text variant has a `dim count` header line followed by one
//! `owner_id<TAB>chunk_index<TAB>v1 v2 ...` line per record.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use daldall_core::embed::{norm, EmbeddingStore};
use daldall_core::eval::{Qrels, RetrievalRun, ScoredDoc};
use daldall_core::triplets::Triplet;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"DALDEMB1";
/// Norm tolerance the checker accepts for stored vectors.
pub const NORM_TOLERANCE: f64 = 1e-5;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| Error::io(tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(tmp, e))?;
    f.sync_all().map_err(|e| Error::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(items).as_bytes())
}

/// Parses one JSON record per nonblank line; errors name the file and line.
pub fn parse_jsonl<T: DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::malformed(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_jsonl(path, &read_to_string(path)?)
}

/// TREC qrels: `query_id 0 doc_id relevance`; only positive relevance counts.
pub fn parse_qrels(path: &Path, text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(Error::malformed(path, i + 1, format!("expected 4 columns, found {}", cols.len())));
        }
        let rel: i64 = cols[3]
            .parse()
            .map_err(|_| Error::malformed(path, i + 1, format!("relevance {:?} is not an integer", cols[3])))?;
        let entry = qrels.entry(cols[0].to_string()).or_default();
        if rel > 0 {
            entry.insert(cols[2].to_string());
        }
    }
    qrels.retain(|_, rel| !rel.is_empty());
    Ok(qrels)
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    parse_qrels(path, &read_to_string(path)?)
}

pub fn format_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (q, docs) in qrels {
        for d in docs {
            out.push_str(&format!("{q} 0 {d} 1\n"));
        }
    }
    out
}

/// TREC run lines: `query_id Q0 doc_id rank score tag`, ranks from 1.
pub fn format_run(run: &RetrievalRun, tag: &str) -> String {
    let mut out = String::new();
    for (q, docs) in &run.results {
        for (r, d) in docs.iter().enumerate() {
            out.push_str(&format!("{q} Q0 {} {} {} {tag}\n", d.doc_id, r + 1, d.score));
        }
    }
    out
}

pub fn parse_run(path: &Path, text: &str) -> Result<RetrievalRun> {
    let mut run = RetrievalRun::default();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 6 {
            return Err(Error::malformed(path, i + 1, format!("expected 6 columns, found {}", cols.len())));
        }
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::malformed(path, i + 1, format!("score {:?} is not a number", cols[4])))?;
        run.results.entry(cols[0].to_string()).or_default().push(ScoredDoc {
            doc_id: cols[2].to_string(),
            score,
        });
    }
    Ok(run)
}

pub fn encode_embeddings(store: &EmbeddingStore) -> Vec<u8> {
    let dim = store.dim();
    let mut out = Vec::with_capacity(20 + store.len() * (dim * 4 + 24));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (owner, idx, v) in store.iter() {
        out.extend_from_slice(&(owner.len() as u32).to_le_bytes());
        out.extend_from_slice(owner.as_bytes());
        out.extend_from_slice(&(idx as u32).to_le_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// One raw record of an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub owner_id: String,
    pub chunk_index: usize,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingSummary {
    pub dim: usize,
    pub count: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        if self.bytes.len() - self.pos < n {
            return Err(format!("truncated {what} at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses the binary format, enforcing every structural rule: magic,
/// nonzero dim, exact record count, no trailing bytes, UTF-8 nonempty owner
/// ids, no duplicate keys, finite unit-norm vectors.
pub fn decode_embedding_records(bytes: &[u8]) -> std::result::Result<(EmbeddingSummary, Vec<EmbeddingRecord>), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != EMBEDDING_MAGIC {
        return Err("bad magic: not a binary embedding file".into());
    }
    let dim = c.u32("dim")? as usize;
    if dim == 0 {
        return Err("dim is zero".into());
    }
    let count = u64::from_le_bytes(c.take(8, "count")?.try_into().unwrap()) as usize;
    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for r in 0..count {
        let len = c.u32("owner length")? as usize;
        let owner = std::str::from_utf8(c.take(len, "owner id")?)
            .map_err(|_| format!("record {r}: owner id is not UTF-8"))?
            .to_string();
        if owner.is_empty() {
            return Err(format!("record {r}: empty owner id"));
        }
        let idx = c.u32("chunk index")? as usize;
        let raw = c.take(dim * 4, "vector")?;
        let vector: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        check_vector(&owner, idx, &vector)?;
        if !seen.insert((owner.clone(), idx)) {
            return Err(format!("record {r}: duplicate key {owner}#{idx}"));
        }
        records.push(EmbeddingRecord {
            owner_id: owner,
            chunk_index: idx,
            vector,
        });
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes after {count} records", bytes.len() - c.pos));
    }
    Ok((EmbeddingSummary { dim, count }, records))
}

fn check_vector(owner: &str, idx: usize, v: &[f32]) -> std::result::Result<(), String> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("{owner}#{idx}: non-finite component"));
    }
    let n = norm(v);
    if (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(format!("{owner}#{idx}: norm {n} is not 1 within {NORM_TOLERANCE}"));
    }
    Ok(())
}

/// The format checker: validates a binary embedding file.
pub fn check_embeddings(bytes: &[u8]) -> std::result::Result<EmbeddingSummary, String> {
    decode_embedding_records(bytes).map(|(s, _)| s)
}

pub fn encode_embeddings_text(store: &EmbeddingStore) -> String {
    let mut out = format!("{} {}\n", store.dim(), store.len());
    for (owner, idx, v) in store.iter() {
        let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        out.push_str(&format!("{owner}\t{idx}\t{}\n", vals.join(" ")));
    }
    out
}

/// Parses the text variant. Vectors need not be normalized; the store
/// normalizes them.
pub fn decode_embeddings_text(text: &str) -> std::result::Result<(usize, Vec<EmbeddingRecord>), String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or("empty embedding file")?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err("line 1: header must be `dim count`".into());
    }
    let dim: usize = head[0].parse().map_err(|_| "line 1: bad dim")?;
    let count: usize = head[1].parse().map_err(|_| "line 1: bad count")?;
    let mut records = Vec::with_capacity(count);
    for (i, line) in lines {
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        if cols.len() != 3 {
            return Err(format!("line {}: expected owner, chunk index and vector", i + 1));
        }
        let idx: usize = cols[1].trim().parse().map_err(|_| format!("line {}: bad chunk index", i + 1))?;
        let vector = cols[2]
            .split_whitespace()
            .map(str::parse::<f32>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| format!("line {}: bad vector component", i + 1))?;
        if vector.len() != dim {
            return Err(format!("line {}: vector has {} components, header says {dim}", i + 1, vector.len()));
        }
        records.push(EmbeddingRecord {
            owner_id: cols[0].to_string(),
            chunk_index: idx,
            vector,
        });
    }
    if records.len() != count {
        return Err(format!("header promises {count} records, found {}", records.len()));
    }
    Ok((dim, records))
}

fn records_to_store(dim: usize, records: Vec<EmbeddingRecord>) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(dim)?;
    for r in records {
        store.insert(&r.owner_id, r.chunk_index, r.vector)?;
    }
    Ok(store)
}

/// Loads either variant, sniffing the magic.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Format(format!("{}: {m}", path.display()));
    if bytes.starts_with(EMBEDDING_MAGIC) {
        let (s, records) = decode_embedding_records(&bytes).map_err(bad)?;
        records_to_store(s.dim, records)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| bad("neither binary nor UTF-8 text".into()))?;
        let (dim, records) = decode_embeddings_text(&text).map_err(bad)?;
        records_to_store(dim, records)
    }
}

pub fn save_embeddings(path: &Path, store: &EmbeddingStore) -> Result<()> {
    write_atomic(path, &encode_embeddings(store))
}

/// One JSON object per line with `anchor_text`, `positive_text`,
/// `negative_text` and a `provenance` object. An empty set is refused.
pub fn export_triplets(triplets: &[Triplet]) -> Result<String> {
    if triplets.is_empty() {
        return Err(Error::Format("refusing to export an empty triplet set".into()));
    }
    Ok(to_jsonl(triplets))
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
