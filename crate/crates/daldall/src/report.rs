//! Summary records written by the evaluation stages and their plain-text
//! tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use daldall_core::diversity::{DiversityReport, Grouping};
use daldall_core::triplets::NegativePolicy;
use serde::{Deserialize, Serialize};

use crate::config::RecallAveraging;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub corpus: String,
    pub grouping: Grouping,
    pub sections: usize,
    pub original_avg_token_len: f64,
    /// Whole-set reports first, then per-section reports.
    pub reports: Vec<DiversityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub set: String,
    pub n_queries: usize,
    /// Distinct source queries behind the evaluated queries.
    pub n_sources: usize,
    /// Mean over every evaluated query, one value per k.
    pub macro_recall: Vec<f64>,
    /// Averaged within each source query first, then over queries.
    pub per_query_first: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallSummary {
    pub system: String,
    pub corpus: String,
    pub ks: Vec<usize>,
    pub averaging: RecallAveraging,
    pub rows: Vec<RecallRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletCounts {
    pub triplets: usize,
    pub original_anchors: usize,
    pub augmentation_anchors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletSummary {
    pub i: usize,
    pub negatives: NegativePolicy,
    pub seed: u64,
    pub configs: BTreeMap<String, TripletCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub diversity: Option<DiversitySummary>,
    pub sparse: Option<RecallSummary>,
    pub dense: Option<RecallSummary>,
    pub triplets: Option<TripletSummary>,
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |out: &mut String, cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "{c:>w$}");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(out, header);
    line(out, &widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in rows {
        line(out, r);
    }
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn opt4(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), f4)
}

fn grouping_name(g: Grouping) -> &'static str {
    match g {
        Grouping::PerQuery => "per_query",
        Grouping::Pooled => "pooled",
    }
}

pub fn diversity_text(s: &DiversitySummary) -> String {
    let mut out = format!(
        "Diversity: {} (grouping {}, {} length sections)\n\n",
        s.corpus,
        grouping_name(s.grouping),
        s.sections
    );
    let header: Vec<String> = ["method", "section", "groups", "self_bleu", "intra_cos", "cos_orig", "cos_orig_max", "avg_len"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows = vec![vec![
        "original".into(),
        "all".into(),
        "-".into(),
        "-".into(),
        "-".into(),
        "-".into(),
        "-".into(),
        format!("{:.1}", s.original_avg_token_len),
    ]];
    for r in &s.reports {
        rows.push(vec![
            r.method.as_str().into(),
            r.section.map_or_else(|| "all".into(), |x| x.to_string()),
            r.n_groups.to_string(),
            opt4(r.self_bleu),
            opt4(r.intra_cos),
            f4(r.cos_to_original),
            f4(r.cos_to_original_max),
            format!("{:.1}", r.avg_token_len),
        ]);
    }
    table(&mut out, &header, &rows);
    out
}

fn averaging_name(a: RecallAveraging) -> &'static str {
    match a {
        RecallAveraging::Macro => "macro",
        RecallAveraging::PerQueryFirst => "per_query_first",
    }
}

pub fn recall_text(s: &RecallSummary) -> String {
    let mut out = format!(
        "Recall: {} on {} (headline averaging {})\n\n",
        s.system,
        s.corpus,
        averaging_name(s.averaging)
    );
    let mut header = vec!["set".to_string(), "averaging".into(), "n".into()];
    header.extend(s.ks.iter().map(|k| format!("R@{k}")));
    let mut rows = Vec::new();
    for r in &s.rows {
        let both = [
            (RecallAveraging::Macro, &r.macro_recall),
            (RecallAveraging::PerQueryFirst, &r.per_query_first),
        ];
        for (a, vals) in both {
            if r.set == "original" && a == RecallAveraging::PerQueryFirst {
                continue;
            }
            let n = if a == RecallAveraging::Macro { r.n_queries } else { r.n_sources };
            let mut row = vec![r.set.clone(), averaging_name(a).into(), n.to_string()];
            row.extend(vals.iter().map(|v| f4(*v)));
            rows.push(row);
        }
    }
    table(&mut out, &header, &rows);
    out
}

pub fn triplets_text(s: &TripletSummary) -> String {
    let negatives = match s.negatives {
        NegativePolicy::Bm25Hard => "bm25_hard",
        NegativePolicy::Random => "random",
    };
    let mut out = format!("Triplets (i = {}, negatives {negatives}, seed {})\n\n", s.i, s.seed);
    let header: Vec<String> = ["config", "triplets", "original", "augmented"].iter().map(|h| h.to_string()).collect();
    let rows: Vec<Vec<String>> = s
        .configs
        .iter()
        .map(|(name, c)| {
            vec![
                name.clone(),
                c.triplets.to_string(),
                c.original_anchors.to_string(),
                c.augmentation_anchors.to_string(),
            ]
        })
        .collect();
    table(&mut out, &header, &rows);
    out
}

pub fn render(r: &Report) -> String {
    let mut parts = Vec::new();
    if let Some(d) = &r.diversity {
        parts.push(diversity_text(d));
    }
    if let Some(s) = &r.sparse {
        parts.push(recall_text(s));
    }
    if let Some(d) = &r.dense {
        parts.push(recall_text(d));
    }
    if let Some(t) = &r.triplets {
        parts.push(triplets_text(t));
    }
    parts.join("\n")
}
