//! Lexical (Self-BLEU) and semantic (cosine) diversity of augmentation sets.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::Method;
use crate::corpus::ranked_sections;
use crate::embed::{cosine, norm};
use crate::tokenize::{Tokenizer, WordPunctTokenizer};

/// Added to the numerator of an n-gram precision that would otherwise be 0.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiversityError {
    #[error("need at least 2 items, got {0}")]
    TooFew(usize),
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimMismatch { index: usize, expected: usize, got: usize },
    #[error("vector {0} is zero")]
    ZeroVector(usize),
    #[error("max n-gram order must be positive")]
    ZeroOrder,
    #[error("no groups to report")]
    NoGroups,
    #[error(transparent)]
    Section(#[from] crate::corpus::CorpusError),
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU of `hypothesis` against `references` with uniform weights
/// over 1..=`max_n`, clipped n-gram precisions, epsilon-smoothed zero
/// precisions and the closest-reference-length brevity penalty.
pub fn sentence_bleu(hypothesis: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    let hyp_len = hypothesis.len();
    if hyp_len == 0 || references.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let hyp_counts = ngram_counts(hypothesis, n);
        let mut max_ref: BTreeMap<&[String], usize> = BTreeMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = hyp_len.saturating_sub(n - 1).max(1) as f64;
        let p = if clipped == 0 {
            BLEU_EPSILON / total
        } else {
            clipped as f64 / total
        };
        log_sum += libm::log(p) / max_n as f64;
    }
    let ref_len = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(hyp_len), r))
        .unwrap_or(0);
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / hyp_len as f64)
    };
    bp * libm::exp(log_sum)
}

/// Mean leave-one-out BLEU over pre-tokenized texts.
pub fn self_bleu_tokens(texts: &[Vec<String>], max_n: usize) -> Result<f64, DiversityError> {
    if texts.len() < 2 {
        return Err(DiversityError::TooFew(texts.len()));
    }
    if max_n == 0 {
        return Err(DiversityError::ZeroOrder);
    }
    let mut total = 0.0;
    for i in 0..texts.len() {
        let refs: Vec<Vec<String>> = texts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, t)| t.clone())
            .collect();
        total += sentence_bleu(&texts[i], &refs, max_n);
    }
    Ok(total / texts.len() as f64)
}

/// Self-BLEU over texts tokenized with the default tokenizer.
pub fn self_bleu<S: AsRef<str>>(texts: &[S], max_n: usize) -> Result<f64, DiversityError> {
    let tokenized: Vec<Vec<String>> = texts
        .iter()
        .map(|t| WordPunctTokenizer.surfaces(t.as_ref()))
        .collect();
    self_bleu_tokens(&tokenized, max_n)
}

fn check_vectors<V: AsRef<[f32]>>(vectors: &[V], min: usize) -> Result<(), DiversityError> {
    if vectors.len() < min {
        return Err(DiversityError::TooFew(vectors.len()));
    }
    let dim = vectors[0].as_ref().len();
    for (index, v) in vectors.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(DiversityError::DimMismatch {
                index,
                expected: dim,
                got: v.len(),
            });
        }
        if norm(v) == 0.0 {
            return Err(DiversityError::ZeroVector(index));
        }
    }
    Ok(())
}

/// Mean cosine over all unordered pairs.
pub fn intra_cosine<V: AsRef<[f32]>>(vectors: &[V]) -> Result<f64, DiversityError> {
    check_vectors(vectors, 2)?;
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            sum += cosine(vectors[i].as_ref(), vectors[j].as_ref()).expect("checked");
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineToOriginal {
    /// Mean cosine of the augmentations to the original.
    pub mean: f64,
    /// Highest cosine of any augmentation to the original.
    pub max: f64,
}

pub fn cosine_to_original<V: AsRef<[f32]>>(original: &[f32], augmentations: &[V]) -> Result<CosineToOriginal, DiversityError> {
    if augmentations.is_empty() {
        return Err(DiversityError::TooFew(0));
    }
    if norm(original) == 0.0 {
        return Err(DiversityError::ZeroVector(0));
    }
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for (i, a) in augmentations.iter().enumerate() {
        let a = a.as_ref();
        if a.len() != original.len() {
            return Err(DiversityError::DimMismatch {
                index: i + 1,
                expected: original.len(),
                got: a.len(),
            });
        }
        let c = cosine(original, a).ok_or(DiversityError::ZeroVector(i + 1))?;
        sum += c;
        max = max.max(c);
    }
    Ok(CosineToOriginal {
        mean: sum / augmentations.len() as f64,
        max,
    })
}

/// How Self-BLEU and intra-cosine are pooled across queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Within each query's augmentations, macro-averaged over queries.
    #[default]
    PerQuery,
    /// All augmentations of a method as one set.
    Pooled,
}

/// One source query with its augmentations and their embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryAugmentations {
    pub query_id: String,
    pub original_vector: Vec<f32>,
    pub texts: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub corpus: String,
    pub method: Method,
    /// 1-based ranked section, shortest originals first.
    pub section: Option<usize>,
    pub self_bleu: Option<f64>,
    pub intra_cos: Option<f64>,
    /// Mean over queries of the mean augmentation-to-original cosine.
    pub cos_to_original: f64,
    /// Mean over queries of the highest augmentation-to-original cosine.
    pub cos_to_original_max: f64,
    pub avg_token_len: f64,
    pub n_groups: usize,
}

pub fn diversity_report(
    corpus: &str,
    method: Method,
    section: Option<usize>,
    groups: &[QueryAugmentations],
    grouping: Grouping,
    max_n: usize,
) -> Result<DiversityReport, DiversityError> {
    if groups.is_empty() {
        return Err(DiversityError::NoGroups);
    }
    let mut token_total = 0usize;
    let mut text_total = 0usize;
    let mut cos_mean = 0.0;
    let mut cos_max = 0.0;
    let mut tokenized_groups: Vec<Vec<Vec<String>>> = Vec::with_capacity(groups.len());
    for g in groups {
        let toks: Vec<Vec<String>> = g.texts.iter().map(|t| WordPunctTokenizer.surfaces(t)).collect();
        token_total += toks.iter().map(Vec::len).sum::<usize>();
        text_total += toks.len();
        tokenized_groups.push(toks);
        let c = cosine_to_original(&g.original_vector, &g.vectors)?;
        cos_mean += c.mean;
        cos_max += c.max;
    }
    let n = groups.len() as f64;

    let (self_bleu, intra_cos) = match grouping {
        Grouping::PerQuery => {
            let mut bleu = Vec::new();
            let mut cos = Vec::new();
            for (g, toks) in groups.iter().zip(&tokenized_groups) {
                if toks.len() >= 2 {
                    bleu.push(self_bleu_tokens(toks, max_n)?);
                    cos.push(intra_cosine(&g.vectors)?);
                }
            }
            (mean(&bleu), mean(&cos))
        }
        Grouping::Pooled => {
            let all_toks: Vec<Vec<String>> = tokenized_groups.into_iter().flatten().collect();
            let all_vecs: Vec<&[f32]> = groups.iter().flat_map(|g| g.vectors.iter().map(Vec::as_slice)).collect();
            if all_toks.len() >= 2 {
                (Some(self_bleu_tokens(&all_toks, max_n)?), Some(intra_cosine(&all_vecs)?))
            } else {
                (None, None)
            }
        }
    };

    Ok(DiversityReport {
        corpus: corpus.into(),
        method,
        section,
        self_bleu,
        intra_cos,
        cos_to_original: cos_mean / n,
        cos_to_original_max: cos_max / n,
        avg_token_len: if text_total == 0 { 0.0 } else { token_total as f64 / text_total as f64 },
        n_groups: groups.len(),
    })
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Reports per ranked section of original-query length, per method.
///
/// `query_lengths` ranks every source query; sections are cut over it once
/// and shared by all methods. Sections with no groups for a method are
/// skipped.
pub fn diversity_by_section(
    corpus: &str,
    query_lengths: &BTreeMap<String, usize>,
    methods: &[(Method, Vec<QueryAugmentations>)],
    sections: usize,
    grouping: Grouping,
    max_n: usize,
) -> Result<Vec<DiversityReport>, DiversityError> {
    let ids: Vec<&String> = query_lengths.keys().collect();
    let lengths: Vec<usize> = query_lengths.values().copied().collect();
    let cut = ranked_sections(&lengths, sections)?;
    let mut section_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (s, members) in cut.iter().enumerate() {
        for &i in members {
            section_of.insert(ids[i].as_str(), s);
        }
    }
    let mut out = Vec::new();
    for (method, groups) in methods {
        for s in 0..cut.len() {
            let in_section: Vec<QueryAugmentations> = groups
                .iter()
                .filter(|g| section_of.get(g.query_id.as_str()) == Some(&s))
                .cloned()
                .collect();
            if in_section.is_empty() {
                continue;
            }
            out.push(diversity_report(corpus, *method, Some(s + 1), &in_section, grouping, max_n)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identical_texts_score_one() {
        let t = ["the court held the stop unlawful"; 3];
        assert!((self_bleu(&t, 4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabulary_near_zero() {
        let v = self_bleu(&["alpha beta gamma delta", "one two three four"], 4).unwrap();
        assert!(v <= 1e-6, "{v}");
        assert!(v >= 0.0);
    }

    #[test]
    fn too_few_texts() {
        assert_eq!(self_bleu(&["x"], 4).unwrap_err(), DiversityError::TooFew(1));
        assert_eq!(self_bleu(&["x", "y"], 0).unwrap_err(), DiversityError::ZeroOrder);
    }

    #[test]
    fn brevity_penalty_for_short_hypothesis() {
        let h: Vec<String> = ["a", "b"].iter().map(|s| String::from(*s)).collect();
        let r: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| String::from(*s)).collect();
        let b = sentence_bleu(&h, &[r], 1);
        assert!((b - libm::exp(1.0 - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn intra_cosine_cases() {
        let same = vec![vec![0.3f32, 0.4]; 3];
        assert!((intra_cosine(&same).unwrap() - 1.0).abs() < 1e-12);
        let ortho = [vec![1.0f32, 0.0], vec![0.0, 1.0]];
        assert_eq!(intra_cosine(&ortho).unwrap(), 0.0);
        assert_eq!(intra_cosine(&[vec![1.0f32]]).unwrap_err(), DiversityError::TooFew(1));
        assert!(matches!(
            intra_cosine(&[vec![1.0f32, 0.0], vec![1.0]]),
            Err(DiversityError::DimMismatch { index: 1, .. })
        ));
        assert_eq!(
            intra_cosine(&[vec![1.0f32, 0.0], vec![0.0, 0.0]]).unwrap_err(),
            DiversityError::ZeroVector(1)
        );
    }

    #[test]
    fn cosine_to_original_cases() {
        let o = [1.0f32, 2.0];
        let c = cosine_to_original(&o, &[o.to_vec(), o.to_vec()]).unwrap();
        assert!((c.mean - 1.0).abs() < 1e-12 && (c.max - 1.0).abs() < 1e-12);
        let c = cosine_to_original(&[1.0f32, 0.0], &[vec![0.0f32, 1.0]]).unwrap();
        assert_eq!((c.mean, c.max), (0.0, 0.0));
    }

    fn group(id: &str, texts: &[&str]) -> QueryAugmentations {
        QueryAugmentations {
            query_id: id.into(),
            original_vector: vec![1.0, 0.0],
            texts: texts.iter().map(|s| String::from(*s)).collect(),
            vectors: texts.iter().enumerate().map(|(i, _)| vec![1.0, i as f32]).collect(),
        }
    }

    #[test]
    fn single_section_equals_global() {
        let groups = vec![group("q1", &["a b c d", "a b c e"]), group("q2", &["x y z w", "x y q w"])];
        let lens: BTreeMap<String, usize> = [("q1".into(), 10), ("q2".into(), 20)].into_iter().collect();
        let global = diversity_report("c", Method::Vanilla, None, &groups, Grouping::PerQuery, 4).unwrap();
        let by = diversity_by_section("c", &lens, &[(Method::Vanilla, groups)], 1, Grouping::PerQuery, 4).unwrap();
        assert_eq!(by.len(), 1);
        let mut g = global;
        g.section = Some(1);
        assert_eq!(by[0], g);
    }

    #[test]
    fn pooled_differs_from_per_query() {
        let groups = vec![group("q1", &["a b c d", "a b c d"]), group("q2", &["w x y z", "w x y z"])];
        let per = diversity_report("c", Method::Persona, None, &groups, Grouping::PerQuery, 4).unwrap();
        let pooled = diversity_report("c", Method::Persona, None, &groups, Grouping::Pooled, 4).unwrap();
        assert!((per.self_bleu.unwrap() - 1.0).abs() < 1e-12);
        assert!((pooled.self_bleu.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(per.avg_token_len, 4.0);
        assert_eq!(per.n_groups, 2);
    }

    #[test]
    fn singleton_groups_have_no_self_bleu() {
        let r = diversity_report("c", Method::Vanilla, None, &[group("q", &["a b"])], Grouping::PerQuery, 4).unwrap();
        assert_eq!(r.self_bleu, None);
        assert_eq!(r.intra_cos, None);
    }
}
