//! Two-stage augmentation: essentials extraction, then vanilla or
//! persona-conditioned counterfactual rewrites.
//!
//! The driver is written against [`LlmClient`], a minimal chat-completion
//! interface. Every request carries a stable key of the form
//! `<query_id>/<stage>/<slot>/a<attempt>` that clients use to store and replay
//! transcripts; the key of the response a record was parsed from becomes the
//! record's `raw_response_ref`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::Query;
use crate::persona::{persona_set, Persona};
use crate::prompt::{self, FewShotExample, PromptError};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Essentials {
    pub legal_issue: String,
    #[serde(default)]
    pub legal_test_or_standard: String,
    #[serde(default)]
    pub key_precedents: Vec<String>,
    #[serde(default)]
    pub key_statutes_or_rules: Vec<String>,
    #[serde(default)]
    pub source_query_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    Persona,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Persona => "persona",
        }
    }
}

impl core::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(Method::Vanilla),
            "persona" => Ok(Method::Persona),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// One request per rewrite.
    #[default]
    PerCall,
    /// One request for all rewrites of a query.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub method: Method,
    pub augmentation_count: usize,
    /// Persona set size; required for the persona method.
    pub persona_set: Option<usize>,
    pub template_version: String,
}

impl PromptSpec {
    pub fn vanilla(count: usize) -> Self {
        Self {
            method: Method::Vanilla,
            augmentation_count: count,
            persona_set: None,
            template_version: prompt::TEMPLATE_VERSION.into(),
        }
    }

    /// Persona spec whose count equals the set size.
    pub fn persona(set_size: usize) -> Self {
        Self {
            method: Method::Persona,
            augmentation_count: set_size,
            persona_set: Some(set_size),
            template_version: prompt::TEMPLATE_VERSION.into(),
        }
    }

    /// Personas for the persona method, validated against the count.
    pub fn personas(&self) -> Result<Option<&'static [Persona]>, AugmentError> {
        if self.augmentation_count == 0 {
            return Err(AugmentError::InvalidSpec("augmentation count must be at least 1".into()));
        }
        match (self.method, self.persona_set) {
            (Method::Vanilla, _) => Ok(None),
            (Method::Persona, None) => Err(AugmentError::InvalidSpec("persona method needs a persona set".into())),
            (Method::Persona, Some(size)) => {
                let set = persona_set(size).map_err(|e| AugmentError::InvalidSpec(e.to_string()))?;
                if set.size() != self.augmentation_count {
                    return Err(AugmentError::InvalidSpec(format!(
                        "persona set has {} members but augmentation count is {}",
                        set.size(),
                        self.augmentation_count
                    )));
                }
                Ok(Some(set.members()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedQuery {
    pub aug_id: String,
    pub source_query_id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_id: Option<String>,
    pub text: String,
    pub positives: BTreeSet<String>,
    pub raw_response_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    /// Stable transcript key.
    pub key: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no recorded response for {0}")]
    NotRecorded(String),
}

/// Chat-completion backend. Implementations must be safe to share between
/// worker threads when used concurrently.
pub trait LlmClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

/// Client backed by a closure; handy for stubs.
pub struct FnClient<F>(pub F);

impl<F> LlmClient for FnClient<F>
where
    F: Fn(&ChatRequest) -> Result<String, ClientError>,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Essentials,
    Augment,
}

/// A query the pipeline gave up on. Written out, never silently dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quarantine {
    pub query_id: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub reason: String,
    pub response_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AugmentError {
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("request {key} failed: {source}")]
    Client { key: String, source: ClientError },
    #[error("query {} quarantined: {}", .0.query_id, .0.reason)]
    Quarantined(Quarantine),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after the first for transport failures and
    /// unparseable responses.
    pub retries: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 2 }
    }
}

fn request_key(query_id: &str, stage: &str, slot: &str, attempt: usize) -> String {
    format!("{query_id}/{stage}/{slot}/a{attempt}")
}

/// Parse failure: the last reason and the keys of every rejected response.
type Rejected = (String, Vec<String>);

/// Sends `prompt` until `parse` accepts a response or attempts run out.
/// Returns the parsed value with the key it came from, or the keys of every
/// response that failed to parse.
fn request_parsed<C, T, P>(
    client: &C,
    base_key: impl Fn(usize) -> String,
    prompt: &str,
    attempts: usize,
    parse: P,
) -> Result<Result<(T, String), Rejected>, AugmentError>
where
    C: LlmClient + ?Sized,
    P: Fn(&str) -> Result<T, String>,
{
    let mut refs = Vec::new();
    let mut last_reason = String::from("no attempts");
    for attempt in 0..attempts {
        let req = ChatRequest {
            key: base_key(attempt),
            prompt: prompt.into(),
        };
        match client.complete(&req) {
            Ok(raw) => match parse(&raw) {
                Ok(v) => return Ok(Ok((v, req.key))),
                Err(reason) => {
                    last_reason = reason;
                    refs.push(req.key);
                }
            },
            Err(err @ ClientError::Transport(_)) if attempt + 1 < attempts => {
                last_reason = err.to_string();
            }
            Err(source) => return Err(AugmentError::Client { key: req.key, source }),
        }
    }
    Ok(Err((last_reason, refs)))
}

/// Stage 1: extracts the four essential fields of `query`.
pub fn extract_essentials<C: LlmClient + ?Sized>(
    query: &Query,
    client: &C,
    few_shot: &[FewShotExample],
    retry: RetryPolicy,
) -> Result<Essentials, AugmentError> {
    if query.text.trim().is_empty() {
        return Err(AugmentError::InvalidSpec(format!("query {} has empty text", query.query_id)));
    }
    let prompt = prompt::render_essentials_prompt(&query.text, few_shot)?;
    let qid = query.query_id.as_str();
    match request_parsed(
        client,
        |a| request_key(qid, "essentials", "0", a),
        &prompt,
        retry.retries + 1,
        parse_essentials,
    )? {
        Ok((mut e, _)) => {
            e.source_query_id = query.query_id.clone();
            Ok(e)
        }
        Err((reason, refs)) => Err(AugmentError::Quarantined(Quarantine {
            query_id: query.query_id.clone(),
            stage: Stage::Essentials,
            method: None,
            reason,
            response_refs: refs,
        })),
    }
}

/// Stage 2: produces exactly `spec.augmentation_count` rewrites of `query`,
/// all inheriting its positives.
pub fn augment<C: LlmClient + ?Sized>(
    query: &Query,
    essentials: &Essentials,
    spec: &PromptSpec,
    client: &C,
    mode: GenerationMode,
    retry: RetryPolicy,
) -> Result<Vec<AugmentedQuery>, AugmentError> {
    if essentials.source_query_id != query.query_id {
        return Err(AugmentError::InvalidSpec(format!(
            "essentials belong to {} not {}",
            essentials.source_query_id, query.query_id
        )));
    }
    let personas = spec.personas()?;
    let qid = query.query_id.as_str();
    let method = spec.method;
    let count = spec.augmentation_count;

    let quarantine = |reason: String, refs: Vec<String>| {
        AugmentError::Quarantined(Quarantine {
            query_id: query.query_id.clone(),
            stage: Stage::Augment,
            method: Some(method),
            reason,
            response_refs: refs,
        })
    };
    let record = |slot: usize, text: String, raw_ref: String| {
        let persona_id = personas.map(|ps| String::from(ps[slot].persona_id));
        let aug_id = match &persona_id {
            Some(pid) => format!("{qid}:persona:{pid}"),
            None => format!("{qid}:vanilla:{slot}"),
        };
        AugmentedQuery {
            aug_id,
            source_query_id: query.query_id.clone(),
            method,
            persona_id,
            text,
            positives: query.positives.clone(),
            raw_response_ref: raw_ref,
        }
    };

    let mut out = Vec::with_capacity(count);
    match mode {
        GenerationMode::PerCall => {
            for slot in 0..count {
                let (prompt, slot_name) = match personas {
                    Some(ps) => (
                        prompt::render_persona_prompt(&query.text, essentials, &ps[slot..slot + 1])?,
                        String::from(ps[slot].persona_id),
                    ),
                    None => (prompt::render_vanilla_prompt(&query.text, essentials, 1)?, format!("{slot}")),
                };
                let stage = method.as_str();
                match request_parsed(
                    client,
                    |a| request_key(qid, stage, &slot_name, a),
                    &prompt,
                    retry.retries + 1,
                    |raw| {
                        let mut v = parse_rewrites(raw, 1);
                        if v.len() == 1 {
                            Ok(v.remove(0))
                        } else {
                            Err(String::from("empty rewrite"))
                        }
                    },
                )? {
                    Ok((text, key)) => out.push(record(slot, text, key)),
                    Err((reason, refs)) => return Err(quarantine(reason, refs)),
                }
            }
        }
        GenerationMode::Batch => {
            let prompt = match personas {
                Some(ps) => prompt::render_persona_prompt(&query.text, essentials, ps)?,
                None => prompt::render_vanilla_prompt(&query.text, essentials, count)?,
            };
            let stage = method.as_str();
            // A count mismatch earns exactly one re-request.
            match request_parsed(
                client,
                |a| request_key(qid, stage, "batch", a),
                &prompt,
                2,
                |raw| {
                    let v = parse_rewrites(raw, count);
                    if v.len() == count {
                        Ok(v)
                    } else {
                        Err(format!("expected {count} rewrites, got {}", v.len()))
                    }
                },
            )? {
                Ok((texts, key)) => {
                    for (slot, text) in texts.into_iter().enumerate() {
                        out.push(record(slot, text, key.clone()));
                    }
                }
                Err((reason, refs)) => return Err(quarantine(reason, refs)),
            }
        }
    }
    Ok(out)
}

/// Extracts the first JSON object in `raw` that carries a nonempty
/// `legal_issue`. Surrounding prose and code fences are ignored.
pub fn parse_essentials(raw: &str) -> Result<Essentials, String> {
    for value in json_values(raw) {
        if let Value::Object(map) = value {
            let issue = scalar_field(map.get("legal_issue"));
            if issue.trim().is_empty() {
                continue;
            }
            return Ok(Essentials {
                legal_issue: issue,
                legal_test_or_standard: scalar_field(map.get("legal_test_or_standard")),
                key_precedents: list_field(map.get("key_precedents")),
                key_statutes_or_rules: list_field(map.get("key_statutes_or_rules")),
                source_query_id: String::new(),
            });
        }
    }
    Err(String::from("no structured essentials object in response"))
}

fn scalar_field(v: Option<&Value>) -> String {
    match v {
        Some(Value::String(s)) => s.trim().into(),
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(Value::as_str)
            .collect::<Vec<_>>()
            .join("; "),
        _ => String::new(),
    }
}

fn list_field(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(Value::as_str)
            .map(|s| String::from(s.trim()))
            .filter(|s| !s.is_empty())
            .collect(),
        Some(Value::String(s)) if !s.trim().is_empty() => alloc::vec![String::from(s.trim())],
        _ => Vec::new(),
    }
}

/// Every well-formed JSON object or array embedded in `raw`, outermost first.
fn json_values(raw: &str) -> impl Iterator<Item = Value> + '_ {
    let mut pos = 0usize;
    core::iter::from_fn(move || {
        while pos < raw.len() {
            let rest = &raw[pos..];
            let start = rest.find(['{', '['])?;
            let begin = pos + start;
            let mut stream = serde_json::Deserializer::from_str(&raw[begin..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(v)) => {
                    pos = begin + stream.byte_offset();
                    return Some(v);
                }
                _ => pos = begin + 1,
            }
        }
        None
    })
}

/// Splits a model response into rewrite texts.
///
/// Tries, in order: a JSON list of strings (or of objects with a `text`-like
/// field, or an object wrapping such a list), a numbered or labelled list,
/// then blank-line separated paragraphs. With `expected == 1` an unstructured
/// response is taken whole.
pub fn parse_rewrites(raw: &str, expected: usize) -> Vec<String> {
    for value in json_values(raw) {
        if let Some(list) = json_rewrites(&value) {
            if !list.is_empty() {
                return list;
            }
        }
    }
    let numbered = numbered_items(raw);
    if !numbered.is_empty() && (expected != 1 || numbered.len() == 1) {
        return numbered;
    }
    if expected == 1 {
        let whole = raw.trim();
        return if whole.is_empty() {
            Vec::new()
        } else {
            alloc::vec![String::from(whole)]
        };
    }
    raw.split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect()
}

const TEXT_KEYS: [&str; 4] = ["text", "rewrite", "rewritten_text", "augmentation"];
const LIST_KEYS: [&str; 3] = ["rewrites", "augmentations", "texts"];

fn json_rewrites(value: &Value) -> Option<Vec<String>> {
    match value {
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                let text = match item {
                    Value::String(s) => s.clone(),
                    Value::Object(map) => TEXT_KEYS
                        .iter()
                        .find_map(|k| map.get(*k).and_then(Value::as_str))?
                        .into(),
                    _ => return None,
                };
                let text = text.trim();
                if text.is_empty() {
                    return None;
                }
                out.push(String::from(text));
            }
            Some(out)
        }
        Value::Object(map) => LIST_KEYS
            .iter()
            .find_map(|k| map.get(*k))
            .and_then(json_rewrites)
            .or_else(|| {
                TEXT_KEYS
                    .iter()
                    .find_map(|k| map.get(*k).and_then(Value::as_str))
                    .map(|s| alloc::vec![String::from(s.trim())])
            }),
        _ => None,
    }
}

/// Items of a list written as `1. text`, `2) text`, `**3.** text` or
/// `Rewrite 4: text`, with continuation lines folded into the item.
fn numbered_items(raw: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut started = false;
    for line in raw.lines() {
        match strip_item_marker(line) {
            Some(body) => {
                started = true;
                items.push(String::from(body.trim()));
            }
            None if started && !line.trim().is_empty() => {
                let last = items.last_mut().expect("started implies an item");
                if !last.is_empty() {
                    last.push(' ');
                }
                last.push_str(line.trim());
            }
            None => {}
        }
    }
    items.retain(|s| !s.is_empty());
    items
}

fn strip_item_marker(line: &str) -> Option<&str> {
    let mut s = line.trim_start().trim_start_matches(['#', '*', ' ']);
    for label in ["Rewrite", "Augmentation", "Rewritten Text", "Text"] {
        if let Some(rest) = s.strip_prefix(label) {
            s = rest.trim_start();
            break;
        }
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 2 {
        return None;
    }
    let rest = &s[digits..];
    let rest = rest.strip_prefix(['.', ')', ':'])?;
    Some(rest.trim_start_matches(['*', ' ']))
}
