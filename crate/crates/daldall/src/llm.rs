//! Chat-completion clients: live HTTP, transcript replay, recording wrapper
//! and an offline synthetic stub.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use daldall_core::augment::{ChatRequest, ClientError, LlmClient};
use daldall_core::tokenize::{tokenize, TokenKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::Result;
use crate::formats;

/// One stored exchange. Responses are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub prompt_sha256: String,
    pub response: String,
}

pub fn read_transcripts(path: &Path) -> Result<Vec<Transcript>> {
    formats::read_jsonl(path)
}

/// Attempt number encoded in a request key (`.../a<n>`).
fn attempt_of(key: &str) -> u32 {
    key.rsplit('/')
        .next()
        .and_then(|a| a.strip_prefix('a'))
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}

/// OpenAI-style `/chat/completions` client.
pub struct HttpClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    params: Map<String, Value>,
    backoff: Duration,
}

impl HttpClient {
    pub fn new(
        endpoint: &str,
        model: &str,
        api_key: Option<String>,
        params: Map<String, Value>,
        timeout: Duration,
        backoff: Duration,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            params,
            backoff,
        }
    }
}

impl LlmClient for HttpClient {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, ClientError> {
        // Retries re-enter with a higher attempt number; back off exponentially.
        let attempt = attempt_of(&request.key);
        if attempt > 0 {
            std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
        }
        let mut body = self.params.clone();
        body.insert("model".into(), json!(self.model));
        body.insert("messages".into(), json!([{ "role": "user", "content": request.prompt }]));
        let mut req = self.agent.post(&self.endpoint);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let transport = |e: String| ClientError::Transport(format!("{}: {e}", request.key));
        let mut resp = req.send_json(Value::Object(body)).map_err(|e| transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| transport(e.to_string()))?;
        if status != 200 {
            return Err(transport(format!("HTTP {status}: {}", text.chars().take(300).collect::<String>())));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| transport(format!("bad JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| transport("response lacks choices[0].message.content".into()))
    }
}

/// Serves recorded responses by request key, refusing changed prompts.
pub struct ReplayClient {
    by_key: HashMap<String, Transcript>,
}

impl ReplayClient {
    pub fn new(transcripts: Vec<Transcript>) -> Self {
        Self {
            by_key: transcripts.into_iter().map(|t| (t.key.clone(), t)).collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(read_transcripts(path)?))
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, ClientError> {
        let t = self
            .by_key
            .get(&request.key)
            .ok_or_else(|| ClientError::NotRecorded(request.key.clone()))?;
        if t.prompt_sha256 != formats::sha256_hex(request.prompt.as_bytes()) {
            return Err(ClientError::NotRecorded(format!("{} (prompt differs from recording)", request.key)));
        }
        Ok(t.response.clone())
    }
}

/// Wraps a client and keeps every successful exchange.
pub struct Recorder<C> {
    inner: C,
    log: Mutex<BTreeMap<String, Transcript>>,
}

impl<C: LlmClient> Recorder<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    /// Recorded exchanges ordered by key.
    pub fn transcripts(&self) -> Vec<Transcript> {
        self.log.lock().expect("transcript log poisoned").values().cloned().collect()
    }
}

impl<C: LlmClient> LlmClient for Recorder<C> {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, ClientError> {
        let response = self.inner.complete(request)?;
        self.log.lock().expect("transcript log poisoned").insert(
            request.key.clone(),
            Transcript {
                key: request.key.clone(),
                prompt_sha256: formats::sha256_hex(request.prompt.as_bytes()),
                response: response.clone(),
            },
        );
        Ok(response)
    }
}

/// Deterministic offline stand-in for a chat model. It reads the source text
/// back out of the rendered prompt, answers Stage 1 with a JSON object, and
/// answers rewrite requests with shuffled, synonym-substituted excerpts
/// framed in a per-persona register. Output depends only on the request.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticClient;

const SYNONYMS: &[(&str, &str)] = &[
    ("court", "tribunal"),
    ("held", "ruled"),
    ("found", "determined"),
    ("argues", "contends"),
    ("shows", "reflects"),
    ("conclude", "determine"),
    ("decision", "judgment"),
    ("ruling", "disposition"),
    ("applies", "governs"),
    ("facts", "circumstances"),
    ("claims", "asserts"),
    ("because", "since"),
    ("therefore", "accordingly"),
    ("however", "nonetheless"),
    ("further", "moreover"),
    ("question", "inquiry"),
    ("issue", "point"),
    ("judge", "jurist"),
    ("record", "file"),
    ("evidence", "proof"),
    ("damages", "compensation"),
    ("petition", "application"),
    ("standard", "benchmark"),
];

struct Voice {
    openers: &'static [&'static str],
    closers: &'static [&'static str],
    substitution: f64,
}

const VANILLA_VOICE: Voice = Voice {
    openers: &["Consider whether", "The question is whether", "At issue is whether"],
    closers: &["What result follows?", "How should this be resolved?"],
    substitution: 0.25,
};

fn voice(persona_id: &str) -> Voice {
    let (openers, closers): (&'static [&'static str], &'static [&'static str]) = match persona_id {
        "defense_attorney" => (&["My client contends that", "The defense submits that"], &["Relief for the accused is warranted."]),
        "prosecutor" => (&["The government maintains that", "The State submits that"], &["Accountability demands enforcement."]),
        "appellate_judge_majority" => (&["We consider whether", "This panel must decide whether"], &["We therefore affirm."]),
        "appellate_judge_dissenting" => (&["I respectfully disagree, because", "The majority errs where"], &["I would reverse."]),
        "law_professor" => (&["Analytically, the puzzle is whether", "Doctrinally, students should ask whether"], &["The doctrine remains contested."]),
        "trial_judge" => (&["On the motion before me", "Turning to the pending request"], &["The motion is decided accordingly."]),
        "public_defender" => (&["For an indigent client", "Speaking for someone without resources"], &["Fairness requires more."]),
        "legal_realist_scholar" => (&["In practice, judges decide whether", "Realistically, outcomes turn on"], &["Policy drives the result."]),
        "judicial_clerk" => (&["Bench memo: the issue presented is whether", "Summary for chambers:"], &["Recommendation follows."]),
        "concurring_judge" => (&["I join the result but write separately because", "Concurring, I note that"], &["I concur in the judgment."]),
        _ => (&["From this perspective"], &["That is the view."]),
    };
    Voice {
        openers,
        closers,
        substitution: 0.6,
    }
}

/// Text between `start` (last occurrence) and the first of `ends` after it.
fn extract_after(prompt: &str, start: &str, ends: &[&str]) -> Option<String> {
    let from = prompt.rfind(start)? + start.len();
    let rest = &prompt[from..];
    let end = ends.iter().filter_map(|e| rest.find(e)).min().unwrap_or(rest.len());
    Some(rest[..end].trim().to_string())
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for part in text.split_inclusive(". ") {
        cur.push_str(part);
        if cur.split_whitespace().count() >= 5 {
            out.push(cur.trim().to_string());
            cur.clear();
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn essentials_for(text: &str) -> Value {
    let toks = tokenize(text);
    let mut precedents = Vec::new();
    let mut statutes = Vec::new();
    let raw: Vec<&str> = toks.iter().map(|t| &text[t.span.clone()]).collect();
    for i in 0..toks.len() {
        if toks[i].surface == "v" && i > 0 && i + 2 < toks.len() && raw[i + 1] == "." {
            let p = format!("{} v. {}", raw[i - 1], raw[i + 2]);
            if !precedents.contains(&p) {
                precedents.push(p);
            }
        }
        if raw[i] == "§" && i + 1 < toks.len() && toks[i + 1].kind != TokenKind::Punct {
            let s = format!("§ {}", raw[i + 1]);
            if !statutes.contains(&s) {
                statutes.push(s);
            }
        }
    }
    let first = sentences(text).into_iter().next().unwrap_or_default();
    let issue: Vec<&str> = first.split_whitespace().take(20).collect();
    json!({
        "legal_issue": format!("Whether {}", issue.join(" ").trim_end_matches('.')),
        "legal_test_or_standard": "the standard stated in the text",
        "key_precedents": precedents,
        "key_statutes_or_rules": statutes,
    })
}

fn rewrite(text: &str, voice: &Voice, rng: &mut ChaCha8Rng) -> String {
    let mut sents = sentences(text);
    sents.shuffle(rng);
    sents.truncate(3);
    let subst: BTreeMap<&str, &str> = SYNONYMS.iter().copied().collect();
    let body: Vec<String> = sents
        .join(" ")
        .split_whitespace()
        .map(|w| {
            let bare = w.trim_end_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
            match subst.get(bare.as_str()) {
                Some(s) if rng.gen_bool(voice.substitution) => {
                    let tail = &w[w.trim_end_matches(|c: char| !c.is_alphanumeric()).len()..];
                    format!("{s}{tail}")
                }
                _ => w.to_string(),
            }
        })
        .collect();
    format!(
        "{} {} {}",
        voice.openers.choose(rng).unwrap(),
        body.join(" "),
        voice.closers.choose(rng).unwrap()
    )
}

impl LlmClient for SyntheticClient {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, ClientError> {
        let parts: Vec<&str> = request.key.split('/').collect();
        let (stage, slot) = match parts.as_slice() {
            [.., stage, slot, _attempt] => (*stage, *slot),
            _ => return Err(ClientError::Transport(format!("unexpected key {}", request.key))),
        };
        if stage == "essentials" {
            let text = extract_after(&request.prompt, "\nText:\n", &[]).unwrap_or_default();
            let obj = serde_json::to_string_pretty(&essentials_for(&text)).expect("json");
            return Ok(format!("Here are the essentials.\n```json\n{obj}\n```\n"));
        }
        let text = extract_after(&request.prompt, "\nOriginal Text: ", &["\n\nGenerate ", "\n\nProduce "]).unwrap_or_default();
        let seed = u64::from_le_bytes(formats::sha256_hex(request.key.as_bytes()).as_bytes()[..8].try_into().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if slot != "batch" {
            let v = if stage == "persona" { voice(slot) } else { VANILLA_VOICE };
            return Ok(rewrite(&text, &v, &mut rng));
        }
        // Batch: one numbered rewrite per persona named in the prompt, or
        // the requested count for vanilla.
        let voices: Vec<Voice> = if stage == "persona" {
            daldall_core::persona::persona_registry()
                .iter()
                .filter(|p| request.prompt.contains(&format!("\"{}\":", p.name)))
                .map(|p| voice(p.persona_id))
                .collect()
        } else {
            let n = extract_after(&request.prompt, "Your task is to produce ", &[" "])
                .and_then(|n| n.parse().ok())
                .unwrap_or(1);
            (0..n).map(|_| VANILLA_VOICE).collect()
        };
        Ok(voices
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{}. {}", i + 1, rewrite(&text, v, &mut rng)))
            .collect::<Vec<_>>()
            .join("\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use daldall_core::augment::{augment, extract_essentials, GenerationMode, PromptSpec, RetryPolicy};
    use daldall_core::corpus::Query;

    fn query() -> Query {
        Query::new(
            "q1",
            "The court held the stop unlawful. See Carroll v. Ohio, 267 U.S. 132 (1925); 42 U.S.C. § 1983. The officer lacked probable cause for the search.",
            ["d1"],
        )
    }

    #[test]
    fn synthetic_round_trip_through_pipeline() {
        let c = Recorder::new(SyntheticClient);
        let q = query();
        let e = extract_essentials(&q, &c, &[], RetryPolicy::default()).unwrap();
        assert_eq!(e.key_precedents, vec!["Carroll v. Ohio"]);
        assert_eq!(e.key_statutes_or_rules, vec!["§ 1983"]);
        for mode in [GenerationMode::PerCall, GenerationMode::Batch] {
            let augs = augment(&q, &e, &PromptSpec::persona(5), &c, mode, RetryPolicy::default()).unwrap();
            assert_eq!(augs.len(), 5);
            let augs = augment(&q, &e, &PromptSpec::vanilla(3), &c, mode, RetryPolicy::default()).unwrap();
            assert_eq!(augs.len(), 3);
        }
        let replay = ReplayClient::new(c.transcripts());
        let again = extract_essentials(&q, &replay, &[], RetryPolicy::default()).unwrap();
        assert_eq!(again, e);
    }

    #[test]
    fn replay_rejects_changed_prompt() {
        let c = Recorder::new(SyntheticClient);
        let req = ChatRequest {
            key: "q/essentials/0/a0".into(),
            prompt: "x\nText:\nA b c d e.".into(),
        };
        c.complete(&req).unwrap();
        let r = ReplayClient::new(c.transcripts());
        assert!(r.complete(&req).is_ok());
        let changed = ChatRequest {
            prompt: "different".into(),
            ..req
        };
        assert!(matches!(r.complete(&changed), Err(ClientError::NotRecorded(_))));
    }

    #[test]
    fn attempt_parsing() {
        assert_eq!(attempt_of("q/vanilla/0/a2"), 2);
        assert_eq!(attempt_of("junk"), 0);
    }
}
