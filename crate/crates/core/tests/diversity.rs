mod oracles;

use std::collections::BTreeMap;
use std::time::Instant;

use daldall_core::augment::Method;
use daldall_core::diversity::{
    cosine_to_original, diversity_by_section, diversity_report, intra_cosine, self_bleu, Grouping, QueryAugmentations,
    BLEU_EPSILON,
};
use proptest::prelude::*;

pub const FIVE_TEXTS: [&str; 5] = [
    "The officer searched the vehicle without a warrant after the stop.",
    "Without a warrant, the officer searched the car following the traffic stop.",
    "Did the warrantless search of the vehicle violate the Fourth Amendment?",
    "The court must decide whether the stop justified searching the vehicle.",
    "A traffic stop led the officer to search the automobile absent a warrant.",
];

#[test]
fn self_bleu_matches_brute_force() {
    let start = Instant::now();
    let got = self_bleu(&FIVE_TEXTS, 4).unwrap();
    let want = oracles::brute_self_bleu(&FIVE_TEXTS, 4, BLEU_EPSILON);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn self_bleu_extremes() {
    let same = ["the court held the stop unlawful"; 3];
    assert!((self_bleu(&same, 4).unwrap() - 1.0).abs() < 1e-12);
    let disjoint = ["alpha beta gamma delta", "one two three four"];
    assert!(self_bleu(&disjoint, 4).unwrap() <= 1e-6);
    assert!(self_bleu(&["only one"], 4).is_err());
}

#[test]
fn intra_cosine_examples() {
    assert!((intra_cosine(&vec![vec![0.6f32, 0.8]; 3]).unwrap() - 1.0).abs() < 1e-6);
    assert!(intra_cosine(&[vec![1.0f32, 0.0], vec![0.0, 1.0]]).unwrap().abs() < 1e-12);
    let r = std::f32::consts::FRAC_1_SQRT_2;
    let got = intra_cosine(&[vec![1.0f32, 0.0], vec![0.0, 1.0], vec![r, r]]).unwrap();
    // Hand computation: (0 + √2/2 + √2/2) / 3.
    let hand = (0.0 + 2f64.sqrt() / 2.0 + 2f64.sqrt() / 2.0) / 3.0;
    assert!((hand - 0.4714).abs() < 1e-4);
    assert!((got - hand).abs() < 1e-9, "{got}");
    let oracle = oracles::pairwise_cosine_mean(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![r as f64, r as f64]]);
    assert!((got - oracle).abs() < 1e-9);
}

#[test]
fn cosine_to_original_fixture() {
    let orig = [1.0f32, 2.0, 2.0];
    let augs = vec![vec![1.0f32, 2.0, 2.0], vec![2.0, -1.0, 0.0], vec![0.0, 3.0, 4.0], vec![-1.0, 0.5, 0.25]];
    let c = cosine_to_original(&orig, &augs).unwrap();
    let o64: Vec<f64> = orig.iter().map(|&x| x as f64).collect();
    let sims: Vec<f64> = augs
        .iter()
        .map(|a| oracles::cos64(&o64, &a.iter().map(|&x| x as f64).collect::<Vec<_>>()))
        .collect();
    let mean = sims.iter().sum::<f64>() / sims.len() as f64;
    let max = sims.iter().cloned().fold(f64::MIN, f64::max);
    assert!((c.mean - mean).abs() < 1e-9);
    assert!((c.max - max).abs() < 1e-9);

    let dup = cosine_to_original(&orig, &[orig.to_vec()]).unwrap();
    assert!((dup.mean - 1.0).abs() < 1e-6 && (dup.max - 1.0).abs() < 1e-6);
    let orth = cosine_to_original(&[1.0f32, 0.0], &[vec![0.0f32, 1.0]]).unwrap();
    assert!(orth.mean.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn intra_cosine_is_scale_invariant(
        set in prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 4), 2..8),
        scales in prop::collection::vec(0.01f32..100.0, 8),
    ) {
        prop_assume!(set.iter().all(|v| v.iter().map(|x| x * x).sum::<f32>() > 1e-3));
        let base = intra_cosine(&set).unwrap();
        let scaled: Vec<Vec<f32>> = set.iter().zip(&scales).map(|(v, s)| v.iter().map(|x| x * s).collect()).collect();
        let after = intra_cosine(&scaled).unwrap();
        prop_assert!((base - after).abs() < 1e-5, "{} vs {}", base, after);
        let oracle = oracles::pairwise_cosine_mean(
            &set.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect::<Vec<_>>(),
        );
        prop_assert!((base - oracle).abs() < 1e-9);
    }
}

/// Fourteen queries of increasing length; query `r` gets five rewrites of a
/// shared sentence with `r` words swapped for rewrite-specific words, so
/// longer queries get more varied rewrites.
fn trend_fixture() -> (BTreeMap<String, usize>, Vec<QueryAugmentations>) {
    let base: Vec<String> = (0..16).map(|w| format!("w{w}")).collect();
    let mut lengths = BTreeMap::new();
    let mut groups = Vec::new();
    for r in 0..14 {
        let qid = format!("q{r:02}");
        lengths.insert(qid.clone(), 100 + 10 * r);
        let texts: Vec<String> = (0..5)
            .map(|k| {
                base.iter()
                    .enumerate()
                    .map(|(i, w)| if i < r { format!("x{r}_{k}_{i}") } else { w.clone() })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let vectors = (0..5).map(|k| vec![1.0f32, k as f32 * 0.1 * r as f32 + 0.01]).collect();
        groups.push(QueryAugmentations {
            query_id: qid,
            original_vector: vec![1.0, 0.0],
            texts,
            vectors,
        });
    }
    (lengths, groups)
}

#[test]
fn sections_show_declining_self_bleu() {
    let (lengths, groups) = trend_fixture();
    let methods = vec![(Method::Persona, groups.clone()), (Method::Vanilla, groups.clone())];
    let reports = diversity_by_section("fx", &lengths, &methods, 7, Grouping::PerQuery, 4).unwrap();
    assert_eq!(reports.len(), 14);
    let persona: Vec<f64> = reports
        .iter()
        .filter(|r| r.method == Method::Persona)
        .map(|r| r.self_bleu.unwrap())
        .collect();
    assert_eq!(persona.len(), 7);
    for w in persona.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{persona:?}");
    }
    assert!(persona[6] < persona[0]);
}

#[test]
fn single_section_equals_global_report() {
    let (lengths, groups) = trend_fixture();
    let global = diversity_report("fx", Method::Vanilla, None, &groups, Grouping::PerQuery, 4).unwrap();
    let one = diversity_by_section("fx", &lengths, &[(Method::Vanilla, groups)], 1, Grouping::PerQuery, 4).unwrap();
    assert_eq!(one.len(), 1);
    let mut s = one[0].clone();
    assert_eq!(s.section, Some(1));
    s.section = None;
    assert_eq!(s, global);
}
