//! Independent reference computations used by the integration and
//! acceptance tests. Each is written from the defining formula with naive
//! data structures and shares no code with the crate under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

/// Reference splitter: maximal alphanumeric runs, else single non-space chars.
pub fn regex_tokens(text: &str) -> Vec<String> {
    let re = regex::Regex::new(r"[\p{Alphabetic}\p{N}]+|[^\s\p{Alphabetic}\p{N}]").unwrap();
    re.find_iter(text)
        .map(|m| m.as_str().chars().flat_map(char::to_lowercase).collect())
        .collect()
}

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

fn occurrences(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// Sentence BLEU by explicit n-gram lists: clipped precision per order,
/// zero counts replaced by `eps`, uniform geometric mean, brevity penalty
/// against the closest reference length (shorter on ties).
pub fn brute_bleu(hyp: &[String], refs: &[Vec<String>], max_n: usize, eps: f64) -> f64 {
    let mut product = 1.0f64;
    for n in 1..=max_n {
        let h = ngrams(hyp, n);
        let ref_lists: Vec<Vec<Vec<String>>> = refs.iter().map(|r| ngrams(r, n)).collect();
        let mut distinct: Vec<Vec<String>> = Vec::new();
        for g in &h {
            if !distinct.contains(g) {
                distinct.push(g.clone());
            }
        }
        let mut clipped = 0usize;
        for g in &distinct {
            let in_hyp = occurrences(&h, g);
            let best_ref = ref_lists.iter().map(|r| occurrences(r, g)).max().unwrap_or(0);
            clipped += in_hyp.min(best_ref);
        }
        let denom = h.len().max(1) as f64;
        let p = if clipped == 0 { eps / denom } else { clipped as f64 / denom };
        product *= p.powf(1.0 / max_n as f64);
    }
    let c = hyp.len() as f64;
    let mut best: Option<usize> = None;
    for r in refs {
        best = match best {
            None => Some(r.len()),
            Some(b) => {
                let (db, dr) = ((b as f64 - c).abs(), (r.len() as f64 - c).abs());
                if dr < db || (dr == db && r.len() < b) {
                    Some(r.len())
                } else {
                    Some(b)
                }
            }
        };
    }
    let r = best.unwrap() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * product
}

/// Mean over texts of BLEU against all the others.
pub fn brute_self_bleu(texts: &[&str], max_n: usize, eps: f64) -> f64 {
    let toks: Vec<Vec<String>> = texts.iter().map(|t| regex_tokens(t)).collect();
    let mut sum = 0.0;
    for i in 0..toks.len() {
        let refs: Vec<Vec<String>> = (0..toks.len()).filter(|&j| j != i).map(|j| toks[j].clone()).collect();
        sum += brute_bleu(&toks[i], &refs, max_n, eps);
    }
    sum / toks.len() as f64
}

pub fn cos64(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Mean cosine over unordered pairs.
pub fn pairwise_cosine_mean(vs: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..vs.len() {
        for j in 0..vs.len() {
            if i < j {
                sum += cos64(&vs[i], &vs[j]);
                n += 1;
            }
        }
    }
    sum / n as f64
}

/// BM25 of every document for `query`, straight from the formula. Every
/// query token occurrence contributes.
pub fn brute_bm25(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    docs.iter()
        .map(|d| {
            let mut s = 0.0;
            for t in query {
                let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                let tf = d.iter().filter(|x| *x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
            }
            s
        })
        .collect()
}

/// |top-k ∩ relevant| / |relevant|.
pub fn brute_recall(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    let top: BTreeSet<&String> = ranked.iter().take(k).collect();
    relevant.iter().filter(|r| top.contains(r)).count() as f64 / relevant.len() as f64
}

/// Indices `(query_chunk, doc, doc_chunk)` chosen by the pairing rule,
/// from a full descending sort of every pair.
pub fn brute_pairs(sims: &[Vec<Vec<f64>>], i: usize) -> Vec<(usize, usize, usize)> {
    let mut all = Vec::new();
    for (qa, per_doc) in sims.iter().enumerate() {
        for (d, row) in per_doc.iter().enumerate() {
            for (b, s) in row.iter().enumerate() {
                all.push((*s, qa, d, b));
            }
        }
    }
    // Bubble sort: descending sim, then ascending indices.
    let n = all.len();
    for x in 0..n {
        for y in 0..n - 1 - x {
            let (a, b) = (all[y], all[y + 1]);
            let swap = a.0 < b.0 || (a.0 == b.0 && (a.1, a.2, a.3) > (b.1, b.2, b.3));
            if swap {
                all.swap(y, y + 1);
            }
        }
    }
    if sims.len() >= i {
        return all.iter().take(i).map(|p| (p.1, p.2, p.3)).collect();
    }
    let mut out = Vec::new();
    for qa in 0..sims.len() {
        let best = all.iter().find(|p| p.1 == qa).unwrap();
        out.push((best.1, best.2, best.3));
    }
    out.sort_by(|a, b| {
        let sa = sims[a.0][a.1][a.2];
        let sb = sims[b.0][b.1][b.2];
        sb.partial_cmp(&sa).unwrap().then(a.cmp(b))
    });
    out
}
