//! Corpus readers for the three source layouts and the canonical writer.
//!
//! * `canonical`: `documents.jsonl` (`doc_id`, `text`), `queries.jsonl`
//!   (`query_id`, `text`), `qrels.txt` (TREC, 4 columns).
//! * `coliee_like`: `queries/<id>.txt`, `candidates/<id>.txt` and
//!   `labels.json` mapping query file names to lists of candidate file names.
//! * `clerc_like`: `collection.tsv` and `queries.tsv` (`id<TAB>text`, with
//!   `\n`, `\t` and `\\` escapes) plus `qrels.txt`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use daldall_core::corpus::{Corpus, Document, Query, Split};
use daldall_core::eval::Qrels;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    ColieeLike,
    ClercLike,
    #[default]
    Canonical,
}

impl SourceFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceFormat::ColieeLike => "coliee_like",
            SourceFormat::ClercLike => "clerc_like",
            SourceFormat::Canonical => "canonical",
        }
    }
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "coliee_like" => Ok(SourceFormat::ColieeLike),
            "clerc_like" => Ok(SourceFormat::ClercLike),
            "canonical" => Ok(SourceFormat::Canonical),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const QRELS_FILE: &str = "qrels.txt";

#[derive(Debug, Deserialize)]
struct DocIn {
    doc_id: String,
    text: String,
}

#[derive(Debug, Deserialize)]
struct QueryIn {
    query_id: String,
    text: String,
}

#[derive(Serialize)]
struct QueryOut<'a> {
    query_id: &'a str,
    text: &'a str,
    token_count: usize,
}

/// Raw id/text pairs with the line (or file) each came from.
type Sourced = Vec<(String, String, PathBuf, usize)>;

fn check_unique(records: &Sourced, what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (id, _, path, line) in records {
        if id.is_empty() {
            return Err(Error::malformed(path, *line, format!("empty {what} id")));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::malformed(path, *line, format!("duplicate {what} id {id}")));
        }
    }
    Ok(())
}

fn assemble(name: &str, split: Split, docs: Sourced, queries: Sourced, qrels: Qrels) -> Result<Corpus> {
    check_unique(&docs, "document")?;
    check_unique(&queries, "query")?;
    let known: BTreeSet<&str> = queries.iter().map(|q| q.0.as_str()).collect();
    if let Some(q) = qrels.keys().find(|q| !known.contains(q.as_str())) {
        return Err(Error::Format(format!("relevance labels name unknown query {q}")));
    }
    let documents = docs.into_iter().map(|(id, text, _, _)| Document::new(id, text)).collect();
    let queries = queries
        .into_iter()
        .map(|(id, text, _, _)| {
            let pos = qrels.get(&id).cloned().unwrap_or_default();
            Query::new(id, text, pos)
        })
        .collect();
    Ok(Corpus::new(name, split, documents, queries)?)
}

pub fn ingest(source_dir: &Path, format: SourceFormat, name: &str, split: Split) -> Result<Corpus> {
    if !source_dir.is_dir() {
        return Err(Error::io(
            source_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "source directory not found"),
        ));
    }
    match format {
        SourceFormat::Canonical => read_canonical(source_dir, name, split),
        SourceFormat::ColieeLike => read_coliee_like(source_dir, name, split),
        SourceFormat::ClercLike => read_clerc_like(source_dir, name, split),
    }
}

fn jsonl_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(T, usize)>> {
    let text = formats::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::malformed(path, i + 1, e.to_string()))?;
        out.push((rec, i + 1));
    }
    Ok(out)
}

fn read_canonical(dir: &Path, name: &str, split: Split) -> Result<Corpus> {
    let dpath = dir.join(DOCUMENTS_FILE);
    let qpath = dir.join(QUERIES_FILE);
    let docs = jsonl_records::<DocIn>(&dpath)?
        .into_iter()
        .map(|(d, line)| (d.doc_id, d.text, dpath.clone(), line))
        .collect();
    let queries = jsonl_records::<QueryIn>(&qpath)?
        .into_iter()
        .map(|(q, line)| (q.query_id, q.text, qpath.clone(), line))
        .collect();
    let qrels = formats::read_qrels(&dir.join(QRELS_FILE))?;
    assemble(name, split, docs, queries, qrels)
}

fn strip_txt(name: &str) -> &str {
    name.strip_suffix(".txt").unwrap_or(name)
}

fn read_txt_dir(dir: &Path) -> Result<Sourced> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let raw = fs::read(&f).map_err(|e| Error::io(&f, e))?;
        let text = String::from_utf8(raw).map_err(|e| {
            let prefix = &e.as_bytes()[..e.utf8_error().valid_up_to()];
            let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
            Error::malformed(&f, line, "invalid UTF-8")
        })?;
        let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        out.push((id, text.trim().to_string(), f, 1));
    }
    Ok(out)
}

fn read_coliee_like(dir: &Path, name: &str, split: Split) -> Result<Corpus> {
    let docs = read_txt_dir(&dir.join("candidates"))?;
    let queries = read_txt_dir(&dir.join("queries"))?;
    let lpath = dir.join("labels.json");
    let text = formats::read_to_string(&lpath)?;
    let labels: BTreeMap<String, Vec<String>> =
        serde_json::from_str(&text).map_err(|e| Error::malformed(&lpath, e.line(), e.to_string()))?;
    let qrels = labels
        .into_iter()
        .map(|(q, ds)| {
            (
                strip_txt(&q).to_string(),
                ds.iter().map(|d| strip_txt(d).to_string()).collect(),
            )
        })
        .collect();
    assemble(name, split, docs, queries, qrels)
}

pub fn escape_tsv(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_tsv(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(o) => return Err(format!("unknown escape \\{o}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

fn read_tsv(path: &Path) -> Result<Sourced> {
    let text = formats::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::malformed(path, i + 1, "expected `id<TAB>text`"))?;
        let body = unescape_tsv(body).map_err(|m| Error::malformed(path, i + 1, m))?;
        out.push((id.trim().to_string(), body, path.to_path_buf(), i + 1));
    }
    Ok(out)
}

fn read_clerc_like(dir: &Path, name: &str, split: Split) -> Result<Corpus> {
    let docs = read_tsv(&dir.join("collection.tsv"))?;
    let queries = read_tsv(&dir.join("queries.tsv"))?;
    let qrels = formats::read_qrels(&dir.join(QRELS_FILE))?;
    assemble(name, split, docs, queries, qrels)
}

/// Canonical file contents `(documents, queries, qrels)`.
pub fn export_canonical(corpus: &Corpus) -> (String, String, String) {
    let docs = formats::to_jsonl(corpus.documents());
    let queries: Vec<QueryOut> = corpus
        .queries()
        .iter()
        .map(|q| QueryOut {
            query_id: &q.query_id,
            text: &q.text,
            token_count: q.token_count,
        })
        .collect();
    (docs, formats::to_jsonl(&queries), formats::format_qrels(&corpus.qrels()))
}

pub fn write_canonical(dir: &Path, corpus: &Corpus) -> Result<Vec<PathBuf>> {
    let (d, q, r) = export_canonical(corpus);
    let paths = [dir.join(DOCUMENTS_FILE), dir.join(QUERIES_FILE), dir.join(QRELS_FILE)];
    for (p, body) in paths.iter().zip([d, q, r]) {
        formats::write_atomic(p, body.as_bytes())?;
    }
    Ok(paths.to_vec())
}

/// Writes `corpus` in one of the source layouts.
pub fn write_source(dir: &Path, corpus: &Corpus, format: SourceFormat) -> Result<()> {
    match format {
        SourceFormat::Canonical => {
            write_canonical(dir, corpus)?;
        }
        SourceFormat::ColieeLike => {
            for d in corpus.documents() {
                formats::write_atomic(&dir.join("candidates").join(format!("{}.txt", d.doc_id)), d.text.as_bytes())?;
            }
            let mut labels = BTreeMap::new();
            for q in corpus.queries() {
                formats::write_atomic(&dir.join("queries").join(format!("{}.txt", q.query_id)), q.text.as_bytes())?;
                let ds: Vec<String> = q.positives.iter().map(|d| format!("{d}.txt")).collect();
                labels.insert(format!("{}.txt", q.query_id), ds);
            }
            let json = serde_json::to_string_pretty(&labels).expect("labels serialize");
            formats::write_atomic(&dir.join("labels.json"), json.as_bytes())?;
        }
        SourceFormat::ClercLike => {
            let tsv = |rows: Vec<(&str, &str)>| -> String {
                rows.into_iter()
                    .map(|(id, t)| format!("{id}\t{}\n", escape_tsv(t)))
                    .collect()
            };
            let docs = tsv(corpus.documents().iter().map(|d| (d.doc_id.as_str(), d.text.as_str())).collect());
            let qs = tsv(corpus.queries().iter().map(|q| (q.query_id.as_str(), q.text.as_str())).collect());
            formats::write_atomic(&dir.join("collection.tsv"), docs.as_bytes())?;
            formats::write_atomic(&dir.join("queries.tsv"), qs.as_bytes())?;
            formats::write_atomic(&dir.join(QRELS_FILE), formats::format_qrels(&corpus.qrels()).as_bytes())?;
        }
    }
    Ok(())
}
