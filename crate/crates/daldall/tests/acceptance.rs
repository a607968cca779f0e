//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if
//! any fails. Runs offline on the bundled mini-corpus.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::checks::{bm25_oracle, check_bm25_set, check_triplet_file, load, Loaded};
use common::{oracles, read_jsonl, Style};
use daldall_core::augment::{augment, ChatRequest, Essentials, FnClient, GenerationMode, PromptSpec, RetryPolicy};
use daldall_core::bm25::{Bm25Params, InvertedIndex};
use daldall_core::chunk::ChunkPolicy;
use daldall_core::corpus::Query;
use daldall_core::diversity::{intra_cosine, self_bleu, BLEU_EPSILON};
use daldall_core::persona::{persona_set, SET_SIZES};
use daldall_core::prompt::{
    essentials_json, render_essentials_prompt, render_persona_prompt, render_vanilla_prompt, FewShotExample,
};
use daldall_core::scoring::{score_matrix, ScoreMethod};
use daldall_core::triplets::select_chunk_pairs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIVE_TEXTS: [&str; 5] = [
    "The officer searched the vehicle without a warrant after the stop.",
    "Without a warrant, the officer searched the car following the traffic stop.",
    "Did the warrantless search of the vehicle violate the Fourth Amendment?",
    "The court must decide whether the stop justified searching the vehicle.",
    "A traffic stop led the officer to search the automobile absent a warrant.",
];

fn self_bleu_oracle() {
    let start = Instant::now();
    let got = self_bleu(&FIVE_TEXTS, 4).unwrap();
    let want = oracles::brute_self_bleu(&FIVE_TEXTS, 4, BLEU_EPSILON);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    let same = ["the court held the stop unlawful"; 4];
    assert!((self_bleu(&same, 4).unwrap() - 1.0).abs() < 1e-12);
    let disjoint = ["alpha beta gamma delta", "one two three four", "red green blue"];
    assert!(self_bleu(&disjoint, 4).unwrap() <= 1e-6);
    assert!(start.elapsed() < Duration::from_secs(1), "{:?}", start.elapsed());
}

fn cosine_metrics() {
    let r = std::f32::consts::FRAC_1_SQRT_2;
    let got = intra_cosine(&[vec![1.0f32, 0.0], vec![0.0, 1.0], vec![r, r]]).unwrap();
    let oracle = oracles::pairwise_cosine_mean(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![r as f64, r as f64]]);
    assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    // Hand computation: (0 + √2/2 + √2/2) / 3.
    let hand = 2f64.sqrt() / 3.0;
    assert!((hand - 0.4714).abs() < 1e-4);
    assert!((got - hand).abs() < 1e-9, "{got} vs {hand}");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let dim = rng.gen_range(2..16);
        let n = rng.gen_range(2..7);
        let vs: Vec<Vec<f32>> = (0..n)
            .map(|_| loop {
                let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if v.iter().map(|x| x * x).sum::<f32>() > 1e-2 {
                    break v;
                }
            })
            .collect();
        let scaled: Vec<Vec<f32>> = vs
            .iter()
            .map(|v| {
                let c: f32 = rng.gen_range(0.1..10.0);
                v.iter().map(|x| x * c).collect()
            })
            .collect();
        let (a, b) = (intra_cosine(&vs).unwrap(), intra_cosine(&scaled).unwrap());
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}

fn scoring_equivalences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..500 {
        let rows = rng.gen_range(1..9);
        let cols = rng.gen_range(1..9);
        let lo = if case % 2 == 0 { 0.0 } else { -1.0 };
        let m: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(lo..1.0)).collect()).collect();
        let gm = score_matrix(&m, ScoreMethod::GlobalMax).unwrap();
        let row_max = m.iter().map(|r| score_matrix(std::slice::from_ref(r), ScoreMethod::MaxP).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(gm, row_max);
        if m.iter().all(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= 0.0) {
            assert!(score_matrix(&m, ScoreMethod::LateInteraction).unwrap() >= gm - 1e-12);
        }
        let x = rng.gen_range(-1.0..1.0);
        for method in ScoreMethod::ALL {
            assert_eq!(score_matrix(&[vec![x]], method).unwrap(), x, "{method:?}");
        }
    }
    assert!(start.elapsed() < Duration::from_secs(5), "{:?}", start.elapsed());
}

fn bm25_oracle_check(ws: &Path) {
    let docs = [
        ("a", "The landlord breached the warranty of habitability."),
        ("b", "A tenant may withhold rent when the landlord fails to repair."),
        ("c", "The employer sought to enforce the non-compete covenant against the employee."),
    ];
    let idx = InvertedIndex::build(docs.iter().copied(), Bm25Params::default()).unwrap();
    let toks: Vec<Vec<String>> = docs.iter().map(|(_, t)| oracles::regex_tokens(t)).collect();
    for query in ["landlord repair", "the landlord the tenant", "non-compete employee covenant", "habitability"] {
        let want = oracles::brute_bm25(&toks, &oracles::regex_tokens(query), 1.2, 0.75);
        let got: BTreeMap<String, f64> = idx.score_all(query).into_iter().map(|d| (d.doc_id, d.score)).collect();
        for ((id, _), w) in docs.iter().zip(&want) {
            let g = got.get(*id).copied().unwrap_or(0.0);
            assert!((g - w).abs() < 1e-9, "{query} {id}: {g} vs {w}");
        }
    }

    let l = load(ws);
    let oracle = bm25_oracle(&l);
    check_bm25_set(ws, &oracle, "original", &l.queries);
    for method in ["vanilla", "persona"] {
        check_bm25_set(ws, &oracle, method, &augmented(ws, &l, method));
    }
}

fn augmented(ws: &Path, l: &Loaded, method: &str) -> BTreeMap<String, (String, std::collections::BTreeSet<String>)> {
    read_jsonl(&ws.join(format!("augmentations/{method}.jsonl")))
        .into_iter()
        .map(|a| {
            let src = a["source_query_id"].as_str().unwrap();
            (a["aug_id"].as_str().unwrap().to_string(), (a["text"].as_str().unwrap().to_string(), l.queries[src].1.clone()))
        })
        .collect()
}

fn chunking() {
    let starts: Vec<usize> = ChunkPolicy::new(512, 80).unwrap().windows(1000).iter().map(|w| w.0).collect();
    assert_eq!(starts, vec![0, 432, 864]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.gen_range(0..3000);
        let size = rng.gen_range(1..700);
        let overlap = rng.gen_range(0..size);
        let w = ChunkPolicy::new(size, overlap).unwrap().windows(n);
        if n == 0 {
            assert!(w.is_empty());
            continue;
        }
        let mut covered = vec![false; n];
        let mut rebuilt: Vec<usize> = Vec::new();
        for (k, &(s, e)) in w.iter().enumerate() {
            assert!(s < e && e <= n && e - s <= size);
            if k > 0 {
                assert_eq!(s, w[k - 1].0 + size - overlap);
            }
            covered[s..e].iter_mut().for_each(|c| *c = true);
            rebuilt.extend(rebuilt.len().max(s)..e);
        }
        assert_eq!(w[0].0, 0);
        assert_eq!(w.last().unwrap().1, n);
        assert!(covered.iter().all(|&c| c), "n={n} size={size} overlap={overlap}");
        assert_eq!(rebuilt, (0..n).collect::<Vec<_>>());
    }
}

fn unit(theta: f64) -> Vec<f32> {
    vec![theta.cos() as f32, theta.sin() as f32]
}

fn sims_of(q: &[Vec<f32>], docs: &[Vec<Vec<f32>>]) -> Vec<Vec<Vec<f64>>> {
    q.iter()
        .map(|a| {
            docs.iter()
                .map(|d| d.iter().map(|b| a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()).collect())
                .collect()
        })
        .collect()
}

fn triplet_construction(ws: &Path, scratch: &Path) {
    let d = vec![vec![unit(0.2), unit(1.3)], vec![unit(0.6)]];
    for n in [3usize, 10] {
        let q: Vec<Vec<f32>> = (0..n).map(|k| unit(k as f64 * 1.4 / n as f64)).collect();
        let pairs = select_chunk_pairs(&q, &d, 5).unwrap();
        assert_eq!(pairs.len(), n.min(5));
        let got: Vec<(usize, usize, usize)> = pairs.iter().map(|p| (p.query_chunk, p.doc_id_index, p.doc_chunk)).collect();
        assert_eq!(got, oracles::brute_pairs(&sims_of(&q, &d), 5));
    }

    let l = load(ws);
    let oracle = bm25_oracle(&l);
    for name in ["original", "vanilla_only", "vanilla_mix", "persona_only", "persona_mix"] {
        let ts = check_triplet_file(ws, &l, &oracle, &ws.join(format!("triplets/{name}.jsonl")));
        assert!(!ts.is_empty(), "{name}");
        if name.ends_with("_mix") {
            let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
            for t in &ts {
                let e = counts.entry(t["provenance"]["source_query_id"].as_str().unwrap()).or_default();
                if t["provenance"]["anchor_kind"] == "original_chunk" {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
            assert!(counts.values().all(|(o, a)| o <= a), "{name}: {counts:?}");
        }
    }

    let copy = scratch.join("ws");
    common::copy_dir(ws, &copy);
    let exports: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let out = scratch.join(format!("persona_mix_{k}.jsonl"));
            common::ok(&[
                "triplets".as_ref(),
                "-q".as_ref(),
                "-w".as_ref(),
                copy.as_os_str(),
                "--config".as_ref(),
                "persona_mix".as_ref(),
                "--seed".as_ref(),
                "42".as_ref(),
                "--force".as_ref(),
                "--out".as_ref(),
                out.as_os_str(),
            ]);
            fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(exports[0], exports[1]);
}

const MEMBERSHIP: [(&str, [bool; 4]); 10] = [
    ("Defense Attorney", [true, true, true, true]),
    ("Prosecutor", [true, true, true, true]),
    ("Appellate Judge (Majority)", [true, true, true, true]),
    ("Appellate Judge (Dissenting)", [false, true, true, true]),
    ("Law Professor", [false, true, true, true]),
    ("Trial Judge", [false, false, true, true]),
    ("Public Defender", [false, false, true, true]),
    ("Legal Realist Scholar", [false, false, false, true]),
    ("Judicial Clerk", [false, false, false, true]),
    ("Concurring Judge", [false, false, false, true]),
];

fn essentials() -> Essentials {
    Essentials {
        legal_issue: "Whether the warrantless vehicle search violated the Fourth Amendment".into(),
        legal_test_or_standard: "probable cause under the automobile exception".into(),
        key_precedents: vec!["Carroll v. United States".into()],
        key_statutes_or_rules: vec!["U.S. Const. amend. IV".into()],
        source_query_id: "q1".into(),
    }
}

const QUERY_TEXT: &str = "Officers stopped the defendant's car and searched the trunk without a warrant.";

fn persona_registry() {
    let mut previous: Vec<&str> = Vec::new();
    for (col, size) in SET_SIZES.iter().enumerate() {
        let set = persona_set(*size).unwrap();
        let mut got: Vec<&str> = set.members().iter().map(|p| p.name).collect();
        let mut want: Vec<&str> = MEMBERSHIP.iter().filter(|(_, m)| m[col]).map(|(n, _)| *n).collect();
        let ids = set.ids();
        assert_eq!(&ids[..previous.len()], &previous[..], "set {size} is not nested");
        previous = ids;
        got.sort();
        want.sort();
        assert_eq!(got, want, "set {size}");
    }

    let q = Query::new("q1", QUERY_TEXT, ["d1"]);
    let client = FnClient(|r: &ChatRequest| {
        let n = r.prompt.matches("Voice/Tone:").count();
        Ok(if n > 1 {
            serde_json::to_string(&(0..n).map(|i| format!("rewrite {i} of {}", r.key)).collect::<Vec<_>>()).unwrap()
        } else {
            format!("rewrite for {}", r.key)
        })
    });
    let want = ["defense_attorney", "prosecutor", "appellate_judge_majority", "appellate_judge_dissenting", "law_professor"];
    for mode in [GenerationMode::PerCall, GenerationMode::Batch] {
        let out = augment(&q, &essentials(), &PromptSpec::persona(5), &client, mode, RetryPolicy::default()).unwrap();
        let ids: Vec<&str> = out.iter().map(|a| a.persona_id.as_deref().unwrap()).collect();
        assert_eq!(ids, want, "{mode:?}");
    }
}

fn prompt_goldens() {
    let fixtures = common::fixtures();
    let reference = |name: &str| fs::read_to_string(fixtures.join("prompts/reference").join(name)).unwrap();
    let golden = |name: &str| fs::read_to_string(fixtures.join("golden/prompts").join(name)).unwrap();
    let e = essentials();

    let got = render_essentials_prompt(QUERY_TEXT, &[]).unwrap();
    assert_eq!(got, format!("{}\nText:\n{QUERY_TEXT}\n", reference("essentials.txt")));
    assert_eq!(got, golden("essentials.txt"));
    let shots: Vec<FewShotExample> = serde_json::from_str(&fs::read_to_string(fixtures.join("few_shot.json")).unwrap()).unwrap();
    assert_eq!(render_essentials_prompt(QUERY_TEXT, &shots).unwrap(), golden("essentials_few_shot.txt"));

    for count in [1, 5] {
        let got = render_vanilla_prompt(QUERY_TEXT, &e, count).unwrap();
        let want = reference("base.txt")
            .replace("{augmentation_count}", &count.to_string())
            .replace("{essentials}", &essentials_json(&e))
            .replace("{text}", QUERY_TEXT);
        assert_eq!(got, want);
        assert_eq!(got, golden(&format!("vanilla_{count}.txt")));
    }
    for size in SET_SIZES {
        let set = persona_set(size).unwrap();
        let got = render_persona_prompt(QUERY_TEXT, &e, set.members()).unwrap();
        assert_eq!(got, golden(&format!("persona_{size}.txt")), "persona_{size}");
    }
}

struct Replay {
    elapsed: Duration,
    workspaces: Vec<(Style, PathBuf)>,
}

fn replay_all(root: &Path) -> Replay {
    let start = Instant::now();
    let workspaces = [Style::Coliee, Style::Clerc]
        .into_iter()
        .map(|style| {
            let dir = root.join(style.name());
            fs::create_dir_all(&dir).unwrap();
            let golden = common::fixtures().join("golden").join(style.name());
            let cfg = common::replay_config(&dir, style, &golden.join("transcripts.jsonl"));
            (style, common::pipeline(&dir, style, &cfg))
        })
        .collect();
    Replay {
        elapsed: start.elapsed(),
        workspaces,
    }
}

fn end_to_end(replay: &Replay) {
    assert!(replay.elapsed < Duration::from_secs(60), "{:?}", replay.elapsed);
    for (style, ws) in &replay.workspaces {
        let golden = common::fixtures().join("golden").join(style.name());
        for (name, got) in [("report.txt", "reports/report.txt"), ("report.json", "reports/report.json")] {
            let want = fs::read_to_string(golden.join(name)).unwrap();
            assert_eq!(fs::read_to_string(ws.join(got)).unwrap(), want, "{} {name}", style.name());
        }
    }
}

fn check(name: &str, f: impl FnOnce()) -> bool {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(()) => {
            println!("PASS {name}");
            true
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            println!("FAIL {name}: {}", msg.lines().next().unwrap_or(""));
            false
        }
    }
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let root = common::scratch("acceptance");
    let replay = panic::catch_unwind(|| replay_all(&root.join("replay")));
    let coliee = replay.as_ref().ok().map(|r| r.workspaces[0].1.clone());
    let with_ws = |f: &dyn Fn(&Path)| f(coliee.as_deref().expect("replay pipeline failed"));

    let results = [
        check("self-bleu oracle", self_bleu_oracle),
        check("cosine metrics", cosine_metrics),
        check("scoring equivalences", scoring_equivalences),
        check("bm25 oracle", || with_ws(&bm25_oracle_check)),
        check("chunking", chunking),
        check("triplet construction", || with_ws(&|ws| triplet_construction(ws, &root.join("triplets")))),
        check("persona registry", persona_registry),
        check("prompt golden files", prompt_goldens),
        check("end-to-end replay", || end_to_end(replay.as_ref().expect("replay pipeline failed"))),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
