//! Recomputations of pipeline artifacts from a finished workspace.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::oracles;
use super::{read_jsonl, CountBm25};

pub struct Loaded {
    pub docs: Vec<(String, String)>,
    /// Query id to (text, positives).
    pub queries: BTreeMap<String, (String, BTreeSet<String>)>,
}

pub fn load(ws: &Path) -> Loaded {
    let mut docs: Vec<(String, String)> = read_jsonl(&ws.join("corpus/documents.jsonl"))
        .into_iter()
        .map(|d| (d["doc_id"].as_str().unwrap().to_string(), d["text"].as_str().unwrap().to_string()))
        .collect();
    docs.sort();
    let qrels = qrels(ws);
    let queries = read_jsonl(&ws.join("corpus/queries.jsonl"))
        .into_iter()
        .map(|q| {
            let id = q["query_id"].as_str().unwrap().to_string();
            let pos = qrels[&id].clone();
            (id, (q["text"].as_str().unwrap().to_string(), pos))
        })
        .collect();
    Loaded { docs, queries }
}

/// Positives from the TREC-style label file.
pub fn qrels(ws: &Path) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for line in fs::read_to_string(ws.join("corpus/qrels.txt")).unwrap().lines() {
        let c: Vec<&str> = line.split_whitespace().collect();
        assert_eq!((c.len(), c[1], c[3]), (4, "0", "1"));
        out.entry(c[0].into()).or_default().insert(c[2].into());
    }
    out
}

pub fn bm25_oracle(l: &Loaded) -> CountBm25 {
    let toks: Vec<(String, Vec<String>)> = l.docs.iter().map(|(id, t)| (id.clone(), oracles::regex_tokens(t))).collect();
    CountBm25::new(&toks)
}

pub fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

pub fn row<'a>(summary: &'a Value, set: &str) -> &'a Value {
    summary["rows"].as_array().unwrap().iter().find(|r| r["set"] == set).unwrap()
}

pub fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

/// Parses a TREC run into query id to ranked (doc, score).
pub fn run_file(path: &Path) -> BTreeMap<String, Vec<(String, f64)>> {
    let mut out: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for line in fs::read_to_string(path).unwrap().lines() {
        let c: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(c.len(), 6);
        assert_eq!(c[1], "Q0");
        let list = out.entry(c[0].into()).or_default();
        assert_eq!(c[3].parse::<usize>().unwrap(), list.len() + 1);
        list.push((c[2].into(), c[4].parse().unwrap()));
    }
    out
}

pub fn mean_recall(rankings: &BTreeMap<String, Vec<String>>, qrels: &BTreeMap<String, BTreeSet<String>>, ks: &[usize]) -> Vec<f64> {
    ks.iter()
        .map(|&k| {
            rankings.iter().map(|(q, r)| oracles::brute_recall(r, &qrels[q], k)).sum::<f64>() / rankings.len() as f64
        })
        .collect()
}

pub fn check_bm25_set(ws: &Path, oracle: &CountBm25, set: &str, queries: &BTreeMap<String, (String, BTreeSet<String>)>) {
    let run = run_file(&ws.join(format!("runs/bm25-{set}.trec")));
    assert_eq!(run.len(), queries.len());
    let mut rankings = BTreeMap::new();
    let mut qrels = BTreeMap::new();
    for (qid, (text, pos)) in queries {
        let want = oracle.ranking(&oracles::regex_tokens(text));
        let got = &run[qid];
        assert_eq!(got.len(), want.len().min(got.len()));
        for ((gd, gs), (wd, ws_)) in got.iter().zip(&want) {
            assert_eq!(gd, wd, "{set} {qid}");
            assert!((gs - ws_).abs() < 1e-9, "{set} {qid} {gd}: {gs} vs {ws_}");
        }
        rankings.insert(qid.clone(), want.into_iter().map(|(d, _)| d).collect::<Vec<_>>());
        qrels.insert(qid.clone(), pos.clone());
    }
    let summary = json(&ws.join("eval/sparse.json"));
    let ks: Vec<usize> = summary["ks"].as_array().unwrap().iter().map(|k| k.as_u64().unwrap() as usize).collect();
    let want = mean_recall(&rankings, &qrels, &ks);
    assert_eq!(floats(&row(&summary, set)["macro_recall"]), want, "{set}");
    for w in want.windows(2) {
        assert!(w[0] <= w[1]);
    }
}

pub fn check_triplet_file(ws: &Path, l: &Loaded, oracle: &CountBm25, path: &Path) -> Vec<Value> {
    let chunks: BTreeMap<(String, u64), String> = read_jsonl(&ws.join("chunks/documents.jsonl"))
        .into_iter()
        .map(|c| {
            (
                (c["parent_id"].as_str().unwrap().to_string(), c["index"].as_u64().unwrap()),
                c["text"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    let ts = read_jsonl(path);
    for t in &ts {
        let p = &t["provenance"];
        let src = p["source_query_id"].as_str().unwrap();
        let positives = &l.queries[src].1;
        let pos = p["positive_doc_id"].as_str().unwrap();
        let neg = p["negative_doc_id"].as_str().unwrap();
        assert!(positives.contains(pos));
        assert!(!positives.contains(neg), "negative {neg} is a positive of {src}");
        let want_neg = oracle
            .ranking(&oracles::regex_tokens(t["anchor_text"].as_str().unwrap()))
            .into_iter()
            .map(|(d, _)| d)
            .chain(oracle.ids.iter().cloned())
            .find(|d| !positives.contains(d))
            .unwrap();
        assert_eq!(neg, want_neg);
        assert_eq!(t["positive_text"].as_str().unwrap(), chunks[&(pos.to_string(), p["positive_chunk_index"].as_u64().unwrap())]);
        assert_eq!(t["negative_text"].as_str().unwrap(), chunks[&(neg.to_string(), p["negative_chunk_index"].as_u64().unwrap())]);
    }
    ts
}

