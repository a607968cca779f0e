mod oracles;

use daldall_core::chunk::{chunk, ChunkPolicy};
use daldall_core::tokenize::{token_count, tokenize};
use proptest::prelude::*;

fn surfaces(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.surface).collect()
}

#[test]
fn empty_text_has_no_tokens() {
    assert!(tokenize("").is_empty());
    assert!(tokenize(" \n\t ").is_empty());
}

#[test]
fn rule_citation_matches_reference_splitter() {
    let text = "Fed. R. Civ. P. 12(b)(6)";
    let expected = ["fed", ".", "r", ".", "civ", ".", "p", ".", "12", "(", "b", ")", "(", "6", ")"];
    assert_eq!(surfaces(text), expected);
    assert_eq!(oracles::regex_tokens(text), expected);
}

#[test]
fn case_name_is_four_tokens() {
    assert_eq!(token_count("Smith v. Jones"), 4);
    assert_eq!(oracles::regex_tokens("Smith v. Jones").len(), 4);
}

#[test]
fn token_spans_slice_the_source() {
    let text = "Über § 1983, the court—held.";
    for t in tokenize(text) {
        let raw = &text[t.span.clone()];
        assert_eq!(raw.chars().flat_map(char::to_lowercase).collect::<String>(), t.surface);
    }
}

fn starts(n_tokens: usize, size: usize, overlap: usize) -> Vec<(usize, usize)> {
    let text = vec!["w"; n_tokens].join(" ");
    chunk("d", &text, &ChunkPolicy::new(size, overlap).unwrap())
        .into_iter()
        .map(|c| (c.token_start, c.token_end))
        .collect()
}

#[test]
fn stride_examples() {
    assert_eq!(starts(1000, 512, 80), vec![(0, 512), (432, 944), (864, 1000)]);
    assert_eq!(starts(500, 512, 80), vec![(0, 500)]);
    assert_eq!(starts(944, 512, 80), vec![(0, 512), (432, 944)]);
    assert!(starts(0, 512, 80).is_empty());
}

#[test]
fn invalid_policies() {
    assert!(ChunkPolicy::new(0, 0).is_err());
    assert!(ChunkPolicy::new(10, 10).is_err());
    assert!(ChunkPolicy::new(10, 9).is_ok());
}

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            "[a-zA-Z]{1,8}",
            "[0-9]{1,4}",
            Just("§".to_string()),
            Just("ß".to_string()),
            Just("Ωmega".to_string()),
            "[.,;:()\\-]",
        ],
        0..60,
    )
    .prop_flat_map(|words| {
        let n = words.len();
        (Just(words), prop::collection::vec(prop_oneof![Just(" "), Just(""), Just("\n"), Just("  ")], n))
    })
    .prop_map(|(words, seps)| words.iter().zip(seps).map(|(w, s)| format!("{w}{s}")).collect())
}

proptest! {
    #[test]
    fn tokenizer_matches_reference_splitter(text in text_strategy()) {
        prop_assert_eq!(surfaces(&text), oracles::regex_tokens(&text));
    }

    #[test]
    fn tokenizer_matches_on_arbitrary_unicode(text in "\\PC{0,40}") {
        prop_assert_eq!(surfaces(&text), oracles::regex_tokens(&text));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Windows tile every token, consecutive windows overlap by exactly the
    /// policy overlap (the last may overlap more), and chunk texts rebuild
    /// the token stream.
    #[test]
    fn windows_cover_and_reconstruct(n in 0usize..3000, size in 1usize..700, overlap_frac in 0.0f64..1.0) {
        let overlap = ((size as f64) * overlap_frac) as usize;
        let overlap = overlap.min(size - 1);
        let policy = ChunkPolicy::new(size, overlap).unwrap();
        let w = policy.windows(n);
        if n == 0 {
            prop_assert!(w.is_empty());
            return Ok(());
        }
        prop_assert_eq!(w[0].0, 0);
        prop_assert_eq!(w.last().unwrap().1, n);
        let mut covered = vec![false; n];
        for (i, &(s, e)) in w.iter().enumerate() {
            prop_assert!(s < e && e - s <= size);
            if i + 1 < w.len() {
                prop_assert_eq!(e - s, size);
                prop_assert_eq!(w[i + 1].0, s + size - overlap);
            }
            for c in covered.iter_mut().take(e).skip(s) {
                *c = true;
            }
        }
        prop_assert!(covered.iter().all(|&c| c));

        // Reconstruct tokens of a synthetic text from the chunk records.
        if n <= 600 {
            let words: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let text = words.join(" ");
            let chunks = chunk("d", &text, &policy);
            let mut rebuilt: Vec<String> = Vec::new();
            for c in &chunks {
                let toks = surfaces(&c.text);
                prop_assert_eq!(toks.len(), c.token_end - c.token_start);
                let skip = rebuilt.len().saturating_sub(c.token_start);
                rebuilt.extend(toks.into_iter().skip(skip));
            }
            prop_assert_eq!(rebuilt, words);
        }
    }
}
