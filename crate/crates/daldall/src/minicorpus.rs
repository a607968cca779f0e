//! Seeded synthetic legal mini-corpus.
//!
//! Texts are assembled from units that are each exactly one default-tokenizer
//! token (an ASCII alphanumeric word or one punctuation character), so the
//! generator knows every token count by construction and records them in a
//! manifest that ingestion and statistics can be checked against.

use std::collections::BTreeMap;

use daldall_core::corpus::{Corpus, Document, Query, Split};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

struct Topic {
    words: &'static [&'static str],
    cases: &'static [(&'static str, &'static str)],
    statute: &'static [&'static str],
}

const TOPICS: [Topic; 10] = [
    Topic {
        words: &["warrantless", "search", "vehicle", "probable", "cause", "suppression", "officer", "evidence", "seizure", "exclusionary", "checkpoint", "consent"],
        cases: &[("Carroll", "Ohio"), ("Mapp", "Indiana")],
        statute: &["U", ".", "S", ".", "Const", ".", "amend", ".", "IV"],
    },
    Topic {
        words: &["contract", "breach", "consideration", "damages", "performance", "offer", "acceptance", "repudiation", "warranty", "seller", "buyer", "delivery"],
        cases: &[("Hadley", "Baxendale"), ("Jacob", "Kent")],
        statute: &["U", ".", "C", ".", "C", ".", "§", "2", "-", "207"],
    },
    Topic {
        words: &["negligence", "duty", "foreseeable", "injury", "proximate", "causation", "reasonable", "care", "plaintiff", "premises", "hazard", "tort"],
        cases: &[("Palsgraf", "Railroad"), ("Rowland", "Christian")],
        statute: &["Restatement", "(", "Second", ")", "of", "Torts", "§", "282"],
    },
    Topic {
        words: &["due", "process", "notice", "hearing", "deprivation", "property", "liberty", "procedural", "agency", "benefits", "termination", "interest"],
        cases: &[("Mathews", "Eldridge"), ("Goldberg", "Kelly")],
        statute: &["U", ".", "S", ".", "Const", ".", "amend", ".", "XIV"],
    },
    Topic {
        words: &["copyright", "infringement", "fair", "use", "transformative", "market", "licensing", "authorship", "originality", "expression", "derivative", "publisher"],
        cases: &[("Campbell", "Acuff"), ("Feist", "Rural")],
        statute: &["17", "U", ".", "S", ".", "C", ".", "§", "107"],
    },
    Topic {
        words: &["discrimination", "employer", "employee", "pretext", "retaliation", "hostile", "workplace", "termination", "promotion", "disparate", "treatment", "protected"],
        cases: &[("McDonnell", "Green"), ("Burlington", "White")],
        statute: &["42", "U", ".", "S", ".", "C", ".", "§", "2000e"],
    },
    Topic {
        words: &["habeas", "petition", "custody", "conviction", "collateral", "review", "procedural", "default", "prisoner", "sentence", "counsel", "ineffective"],
        cases: &[("Strickland", "Washington"), ("Teague", "Lane")],
        statute: &["28", "U", ".", "S", ".", "C", ".", "§", "2254"],
    },
    Topic {
        words: &["securities", "fraud", "misrepresentation", "scienter", "investor", "reliance", "materiality", "disclosure", "shareholder", "stock", "omission", "issuer"],
        cases: &[("Basic", "Levinson"), ("Tellabs", "Makor")],
        statute: &["15", "U", ".", "S", ".", "C", ".", "§", "78j"],
    },
    Topic {
        words: &["removal", "asylum", "persecution", "immigration", "alien", "deportation", "relief", "cancellation", "refugee", "adjustment", "status", "tribunal"],
        cases: &[("Cardoza", "Fonseca"), ("Chevron", "Council")],
        statute: &["8", "U", ".", "S", ".", "C", ".", "§", "1158"],
    },
    Topic {
        words: &["patent", "obviousness", "invention", "prior", "art", "claim", "inventor", "novelty", "specification", "infringement", "skill", "combination"],
        cases: &[("Graham", "Deere"), ("Teleflex", "KSR")],
        statute: &["35", "U", ".", "S", ".", "C", ".", "§", "103"],
    },
];

const FILLER: &[&str] = &[
    "the", "court", "held", "that", "in", "this", "case", "appellant", "argues", "record", "shows", "trial",
    "judge", "found", "was", "not", "whether", "under", "standard", "question", "issue", "on", "appeal",
    "we", "conclude", "its", "a", "of", "to", "and", "by", "with", "respondent", "district", "circuit",
    "decision", "ruling", "lower", "statute", "rule", "applies", "facts", "party", "claims", "because",
    "therefore", "however", "further", "also", "reasoning", "analysis", "precedent", "governs", "matter",
];

/// Party and place names; each document gets its own handful so relevant
/// queries can share specific vocabulary with their positives.
const FACT_WORDS: &[&str] = &[
    "alder", "birch", "cedar", "dogwood", "elm", "fir", "ginkgo", "hazel", "ivy", "juniper", "kapok", "larch",
    "maple", "nutmeg", "oak", "poplar", "quince", "rowan", "spruce", "tamarack", "ulmus", "vine", "willow",
    "yew", "zelkova", "acacia", "banyan", "cypress", "durian", "eucalyptus", "fig", "guava", "hemlock",
    "iroko", "jarrah", "karri", "linden", "mahogany", "neem", "olive", "pine", "quandong", "redwood",
    "sassafras", "teak", "upas", "vitex", "walnut", "xylia", "yucca", "ziziphus", "amber", "basalt",
    "cobalt", "dolomite", "emerald", "feldspar", "garnet", "hematite", "iolite", "jasper", "kyanite",
    "lapis", "malachite", "nephrite", "onyx", "pyrite", "quartz", "ruby", "sapphire", "topaz", "umber",
    "variscite", "wulfenite", "xenotime", "yttrium", "zircon", "agate", "beryl", "calcite",
];

/// Shape presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiniStyle {
    /// Long case-style queries, chunked like documents.
    ColieeLike,
    /// Short paragraph queries.
    ClercLike,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniManifest {
    pub seed: u64,
    pub style: MiniStyle,
    pub documents: BTreeMap<String, usize>,
    pub queries: BTreeMap<String, usize>,
    pub positives: BTreeMap<String, Vec<String>>,
}

pub const DOCS_PER_TOPIC: usize = 4;

#[derive(Clone)]
struct Unit {
    surface: String,
    space_before: bool,
}

#[derive(Default)]
struct Builder {
    units: Vec<Unit>,
}

impl Builder {
    fn word(&mut self, w: &str) {
        self.units.push(Unit {
            surface: w.to_string(),
            space_before: true,
        });
    }

    /// A punctuation mark attached to the previous unit.
    fn mark(&mut self, p: &str) {
        self.units.push(Unit {
            surface: p.to_string(),
            space_before: false,
        });
    }

    /// Citation-style units: no space after `.`, `-`, `(` or `§`.
    fn seq(&mut self, parts: &[&str]) {
        for (i, p) in parts.iter().enumerate() {
            let is_word = p.chars().all(char::is_alphanumeric);
            let glued = i > 0 && matches!(parts[i - 1], "." | "-" | "(" | "§");
            let prev_word = i > 0 && parts[i - 1].chars().all(char::is_alphanumeric);
            // Adjacent words always get a space, otherwise they would merge.
            let space = i == 0 || *p == "(" || *p == "§" || (is_word && (prev_word || !glued));
            self.units.push(Unit {
                surface: p.to_string(),
                space_before: space,
            });
        }
    }

    fn paragraph_break(&mut self) {
        if let Some(next) = self.units.last_mut() {
            next.surface.push_str("\n\n");
        }
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for (i, u) in self.units.iter().enumerate() {
            let after_break = i > 0 && self.units[i - 1].surface.ends_with('\n');
            if i > 0 && u.space_before && !after_break {
                out.push(' ');
            }
            out.push_str(&u.surface);
        }
        out.trim_end().to_string()
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(b: &mut Builder, rng: &mut ChaCha8Rng, topic: &Topic, facts: &[&str], budget: usize) {
    let len = rng.gen_range(7..=18).min(budget.saturating_sub(1)).max(1);
    for k in 0..len {
        let r: f64 = rng.gen();
        let w = if r < 0.35 {
            *topic.words.choose(rng).unwrap()
        } else if r < 0.5 && !facts.is_empty() {
            *facts.choose(rng).unwrap()
        } else {
            *FILLER.choose(rng).unwrap()
        };
        if k == 0 {
            b.word(&capitalize(w));
        } else {
            b.word(w);
        }
        if k > 2 && k + 2 < len && rng.gen_bool(0.08) {
            b.mark(",");
        }
    }
    b.mark(".");
}

fn citation(b: &mut Builder, rng: &mut ChaCha8Rng, topic: &Topic) {
    let (a, z) = topic.cases[rng.gen_range(0..topic.cases.len())];
    let vol = rng.gen_range(100..600).to_string();
    let page = rng.gen_range(1..999).to_string();
    let year = rng.gen_range(1950..2020).to_string();
    b.word("See");
    b.word(a);
    b.word("v");
    b.mark(".");
    b.word(z);
    b.mark(",");
    b.word(&vol);
    b.word("U");
    b.mark(".");
    b.word("S");
    b.mark(".");
    b.word(&page);
    b.seq(&["(", &year, ")"]);
    b.mark(";");
    b.seq(topic.statute);
    b.mark(".");
}

/// Emits roughly `target` tokens of topical prose with citations.
fn text(rng: &mut ChaCha8Rng, topic: &Topic, facts: &[&str], target: usize) -> (String, usize) {
    let mut b = Builder::default();
    let mut since_break = 0;
    while b.units.len() < target {
        let left = target - b.units.len();
        if left > 30 && rng.gen_bool(0.12) {
            citation(&mut b, rng, topic);
        } else {
            sentence(&mut b, rng, topic, facts, left);
        }
        since_break += 1;
        if since_break >= 5 && rng.gen_bool(0.3) {
            b.paragraph_break();
            since_break = 0;
        }
    }
    (b.render(), b.units.len())
}

/// Builds the mini-corpus (10 topics x 4 documents, one query per topic)
/// and its manifest of constructed token counts.
pub fn generate(seed: u64, style: MiniStyle) -> Result<(Corpus, MiniManifest)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut facts_pool: Vec<&str> = FACT_WORDS.to_vec();
    facts_pool.shuffle(&mut rng);
    let mut facts = facts_pool.chunks(2);

    let mut manifest = MiniManifest {
        seed,
        style,
        documents: BTreeMap::new(),
        queries: BTreeMap::new(),
        positives: BTreeMap::new(),
    };
    let mut documents = Vec::new();
    let mut queries = Vec::new();
    for (t, topic) in TOPICS.iter().enumerate() {
        let mut doc_facts = Vec::new();
        for k in 0..DOCS_PER_TOPIC {
            let id = format!("d{:03}", t * DOCS_PER_TOPIC + k + 1);
            let f = facts.next().unwrap_or(&[]).to_vec();
            let target = rng.gen_range(600..2500);
            let (body, n) = text(&mut rng, topic, &f, target);
            manifest.documents.insert(id.clone(), n);
            documents.push(Document::new(id.clone(), body));
            doc_facts.push((id, f));
        }
        let n_pos = if rng.gen_bool(0.5) { 2 } else { 1 };
        let positives: Vec<String> = doc_facts[..n_pos].iter().map(|(id, _)| id.clone()).collect();
        let qfacts: Vec<&str> = doc_facts[..n_pos].iter().flat_map(|(_, f)| f.iter().copied()).collect();
        let target = match style {
            MiniStyle::ColieeLike => rng.gen_range(1500..4000),
            MiniStyle::ClercLike => rng.gen_range(250..450),
        };
        let (body, n) = text(&mut rng, topic, &qfacts, target);
        let qid = format!("q{:02}", t + 1);
        manifest.queries.insert(qid.clone(), n);
        manifest.positives.insert(qid.clone(), positives.clone());
        queries.push(Query::new(qid, body, positives));
    }
    let name = match style {
        MiniStyle::ColieeLike => "mini-coliee",
        MiniStyle::ClercLike => "mini-clerc",
    };
    Ok((Corpus::new(name, Split::Test, documents, queries)?, manifest))
}
