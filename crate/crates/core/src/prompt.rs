//! Prompt templates for essentials extraction and counterfactual rewrites.
//!
//! Templates are stored verbatim with `{name}` placeholders. Rendering is a
//! single left-to-right pass, so substituted values are never re-scanned for
//! placeholders.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::augment::Essentials;
use crate::persona::Persona;

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("template placeholder {{{0}}} has no value")]
    MissingValue(String),
    #[error("persona prompt needs at least one persona")]
    NoPersonas,
}

/// Literal text shown in place of few-shot examples when none are configured.
pub const FEW_SHOT_OMITTED: &str = "(few-shot examples omitted for brevity)";

pub const ESSENTIALS_TEMPLATE: &str = r#"You are a legal-analysis model. Your task is to extract the invariant semantic core of a legal text. The invariant core is the minimal set of legally essential propositions that must remain unchanged across all persona-based rewrites.

STRICT CONSTRAINTS:
- Use only information explicitly present or unambiguously implied by the text.
- Do not infer motives, procedural posture, missing facts, or unstated legal theories.
- Do not add legal doctrine beyond what the text names or quotes.
- Be maximally concise; remove narrative, rhetoric, or stylistic detail.
- When uncertain, use neutral phrasing ("the court indicates...", "the text states...") rather than assumptions.
- Exclude material not necessary for legal invariance, such as:
  - dicta not tied to the holding
  - background facts irrelevant to the legal issue
  - commentary or speculation
  - redundant procedural descriptions
- Before outputting JSON, internally verify that every element is text-supported and legally essential.

Essentials to extract:

These are the only fields that matter for semantic invariance:
- legal_issue: the central legal question explicitly addressed.
- legal_test_or_standard: any doctrinal test or rule stated or quoted.
- key_precedents: cited cases only (no summaries unless text gives one).
- key_statutes_or_rules: cited statutes or rules only.

Below are examples.

{few_shot_examples}

Text:
{text}
"#;

pub const VANILLA_TEMPLATE: &str = r#"You are an expert legal reasoning model generating COUNTERFACTUAL TEXT REWRITES for a legal information retrieval dataset.

Your task is to produce {augmentation_count} COUNTERFACTUAL TEXT REWRITES:
- Be an alternative way of asking about the *same* underlying legal situation.
- Remain semantically equivalent with respect to Essentials (E).
- Differ substantially from the Original Text in wording, syntax, and rhetorical framing.
- Differ from the other rewritten texts to promote lexical and structural diversity.

Essentials (E) are the invariant semantic core. They MUST remain unchanged.

### Diversity Requirements Across All {augmentation_count} Rewrites

Across the {augmentation_count} augmented texts, you MUST:
- Use at least three different sentence structures:
  - e.g., a single complex sentence; two short sentences; a "Under what circumstances..." style question.
- NOT start more than one augmented text with the same first three words.
- Re-order clauses or issues differently across rewrites (some standard-first, some fact-first).

Lexical Diversity Rules:
- Avoid reusing long spans (more than 5 consecutive words) from the Original Text, except for legally indispensable terms (case names, statutes, doctrine labels).
- For each augmented text, use at least 3 paraphrases or synonyms for non-technical phrases in the Original Text (e.g., "affect the outcome" -> "alter the result").

### Strict Requirements

You MUST:
- Preserve all Essentials (E) exactly; do NOT change their meaning.
- Ensure each rewritten text would retrieve the same case/passage as the original.
- Treat this as COUNTERFACTUAL DATA GENERATION:
  - Maximize lexical and structural difference from the Original Text.
  - Change word choice, sentence structure, and rhetorical focus.
  - Avoid copying phrases from the Original Text unless they are legally indispensable terms.
- Maintain legal correctness; do NOT invent new facts, issues, or rules.

You MAY:
- Re-order clauses or issues.
- Foreground or background different parts of Essentials (E).
- Compress or paraphrase non-essential details, so long as you do not contradict Essentials (E).

### NOW PERFORM THE TASK

Essentials (E): {essentials}
Original Text: {text}

Generate {augmentation_count} COUNTERFACTUAL TEXT REWRITES that preserve Essentials (E) exactly, use substantially different phrasing, and also differ meaningfully from one another.
"#;

pub const PERSONA_TEMPLATE: &str = r#"You are an expert legal reasoning model generating persona-conditioned COUNTERFACTUAL TEXT REWRITES for a legal information retrieval dataset.

Your task is to produce {augmentation_count} COUNTERFACTUAL TEXT REWRITES, each written from the perspective of a different TARGET PERSONA. Each rewrite must:
- Be an alternative way of asking about the *same* underlying legal situation.
- Remain semantically equivalent with respect to Essentials (E).
- Differ substantially from the Original Text in wording, syntax, and rhetorical framing.
- Differ from the other rewritten texts to promote lexical and structural diversity.

### Persona Rules

You will produce one rewritten text per persona listed below. Each persona must have a clearly unique tone, rhetorical style, and framing.

PERSONAS:
{persona_dict}

For each persona P:
- Write ONLY in the style of persona P.
- Avoid copying tone, rhetorical patterns, or stylistic decisions from any other persona.
- Ensure strong stylistic separation across personas.
- Still preserve Essentials (E) exactly.

Essentials (E) are the invariant semantic core. They MUST remain unchanged.

### Diversity Requirements Across All {augmentation_count} Rewrites

Across the {augmentation_count} augmented texts, you MUST:
- Use at least three different sentence structures:
  - e.g., a single complex sentence; two short sentences; a "Under what circumstances..." style question.
- NOT start more than one augmented text with the same first three words.
- Re-order clauses or issues differently across rewrites (some standard-first, some fact-first).

Lexical Diversity Rules:
- Avoid reusing long spans (more than 5 consecutive words) from the Original Text, except for legally indispensable terms (case names, statutes, doctrine labels).
- For each augmented text, use at least 3 paraphrases or synonyms for non-technical phrases in the Original Text (e.g., "affect the outcome" -> "alter the result").

### Strict Requirements

You MUST:
- Preserve all Essentials (E) exactly; do NOT change their meaning.
- Ensure each rewritten text would retrieve the same case/passage as the original.
- Treat this as COUNTERFACTUAL DATA GENERATION:
  - Maximize lexical and structural difference from the Original Text.
  - Change word choice, sentence structure, and rhetorical focus.
  - Avoid copying phrases from the Original Text unless they are legally indispensable terms.
- Maintain legal correctness; do NOT invent new facts, issues, or rules.

You MAY:
- Re-order clauses or issues.
- Foreground or background different parts of Essentials (E).
- Compress or paraphrase non-essential details, so long as you do not contradict Essentials (E).

### NOW PERFORM THE TASK

Essentials (E): {essentials}
Original Text: {text}

Produce {augmentation_count} COUNTERFACTUAL TEXT REWRITES, one for each persona, ensuring strong stylistic diversity across personas while preserving Essentials (E) exactly.
"#;

/// Placeholder names appearing in `template`, in order of first appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                let name = &after[..close];
                if !out.contains(&name) {
                    out.push(name);
                }
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Substitutes every `{name}` placeholder in one pass.
pub fn render(template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                let name = &after[..close];
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::MissingValue(String::from(name)))?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// One worked example for the essentials prompt.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FewShotExample {
    pub text: String,
    pub essentials: Essentials,
}

pub fn render_few_shot(examples: &[FewShotExample]) -> String {
    if examples.is_empty() {
        return String::from(FEW_SHOT_OMITTED);
    }
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            format!(
                "Example {}:\nText:\n{}\nOutput:\n{}",
                i + 1,
                ex.text.trim(),
                essentials_json(&ex.essentials)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render_essentials_prompt(text: &str, few_shot: &[FewShotExample]) -> Result<String, PromptError> {
    let shots = render_few_shot(few_shot);
    render(ESSENTIALS_TEMPLATE, &[("few_shot_examples", &shots), ("text", text)])
}

/// The four essential fields as a JSON object, in fixed key order.
pub fn essentials_json(e: &Essentials) -> String {
    let s = |v: &str| serde_json::to_string(v).unwrap_or_default();
    let list = |v: &[String]| serde_json::to_string(v).unwrap_or_default();
    format!(
        "{{\"legal_issue\": {}, \"legal_test_or_standard\": {}, \"key_precedents\": {}, \"key_statutes_or_rules\": {}}}",
        s(&e.legal_issue),
        s(&e.legal_test_or_standard),
        list(&e.key_precedents),
        list(&e.key_statutes_or_rules)
    )
}

/// Personas as a JSON object of name to description, in set order.
pub fn persona_dict(personas: &[Persona]) -> String {
    let body: Vec<String> = personas
        .iter()
        .map(|p| {
            format!(
                "  {}: {}",
                serde_json::to_string(p.name).unwrap_or_default(),
                serde_json::to_string(p.description).unwrap_or_default()
            )
        })
        .collect();
    format!("{{\n{}\n}}", body.join(",\n"))
}

pub fn render_vanilla_prompt(text: &str, essentials: &Essentials, count: usize) -> Result<String, PromptError> {
    let count = format!("{count}");
    let e = essentials_json(essentials);
    render(
        VANILLA_TEMPLATE,
        &[("augmentation_count", &count), ("essentials", &e), ("text", text)],
    )
}

/// Persona prompt asking for one rewrite per listed persona.
pub fn render_persona_prompt(text: &str, essentials: &Essentials, personas: &[Persona]) -> Result<String, PromptError> {
    if personas.is_empty() {
        return Err(PromptError::NoPersonas);
    }
    let count = format!("{}", personas.len());
    let e = essentials_json(essentials);
    let dict = persona_dict(personas);
    render(
        PERSONA_TEMPLATE,
        &[
            ("augmentation_count", &count),
            ("persona_dict", &dict),
            ("essentials", &e),
            ("text", text),
        ],
    )
}
