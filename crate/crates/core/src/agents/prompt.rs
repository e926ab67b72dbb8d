//! Prompt construction and parsing of the reasoner's JSON reply.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::preprocess::ContextWindow;

/// The default reasoning prompt. `{context_entities}` and `{query}` are
/// substituted at build time.
pub const DEFAULT_TEMPLATE: &str = "Context: {context_entities}.
Use only the provided context to answer the
question: `{query}' to the best of your
ability and in a few sentences or less.

If there is more than one answer, summarize
the options. Provide the `uid' values of the
object you used to inform the answer (do NOT
use the `id' value). Return the answer in a
json dictionary format
 [Example:
     {
         `answer': `This is the answer',
         `uid_list': [12345, 98342]
     }]
Do not refer to the context in your answer.";

pub const DEFAULT_REFUSAL_MARKER: &str = "NO_ANSWER";

#[derive(Serialize)]
struct EntityView<'a> {
    uid: u64,
    vertical: &'a str,
    text: &'a str,
}

/// Serialises the context window as a compact JSON array of entities.
pub fn render_context(context: &ContextWindow) -> String {
    let views: Vec<EntityView<'_>> = context
        .entries
        .iter()
        .map(|e| EntityView {
            uid: e.uid,
            vertical: &e.vertical,
            text: &e.text,
        })
        .collect();
    serde_json::to_string(&views).expect("entity views serialise")
}

pub fn build_prompt_with(template: &str, query: &str, context: &ContextWindow) -> String {
    // Substitute the query last so that braces inside documents are never
    // mistaken for placeholders.
    let rendered = render_context(context);
    let (head, tail) = match template.split_once("{context_entities}") {
        Some((h, t)) => (h, Some(t)),
        None => (template, None),
    };
    let mut out = head.replace("{query}", query);
    if let Some(tail) = tail {
        out.push_str(&rendered);
        out.push_str(&tail.replace("{query}", query));
    }
    out
}

pub fn build_prompt(query: &str, context: &ContextWindow) -> String {
    build_prompt_with(DEFAULT_TEMPLATE, query, context)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParsedReply {
    Answer { answer: String, uid_list: Vec<u64> },
    Negative,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unparseable reasoner output: {0}")]
pub struct ParseError(pub String);

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses `{"answer": ..., "uid_list": [...]}`.
///
/// A null or blank answer, or one equal to `refusal_marker`, is a refusal.
pub fn parse_reasoner_output_with(
    raw: &str,
    refusal_marker: &str,
) -> Result<ParsedReply, ParseError> {
    let value: Value =
        serde_json::from_str(strip_fences(raw)).map_err(|e| ParseError(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ParseError("expected a JSON object".into()))?;
    let answer = obj
        .get("answer")
        .ok_or_else(|| ParseError("missing key `answer`".into()))?;
    let uids = obj
        .get("uid_list")
        .ok_or_else(|| ParseError("missing key `uid_list`".into()))?;
    let answer = match answer {
        Value::Null => return Ok(ParsedReply::Negative),
        Value::String(s) => s.trim(),
        _ => return Err(ParseError("`answer` must be a string or null".into())),
    };
    if answer.is_empty() || answer == refusal_marker {
        return Ok(ParsedReply::Negative);
    }
    let uid_list = match uids {
        Value::Null => Vec::new(),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_u64()
                    .ok_or_else(|| ParseError(format!("uid `{v}` is not a non-negative integer")))
            })
            .collect::<Result<_, _>>()?,
        _ => return Err(ParseError("`uid_list` must be an array".into())),
    };
    Ok(ParsedReply::Answer {
        answer: answer.to_string(),
        uid_list,
    })
}

pub fn parse_reasoner_output(raw: &str) -> Result<ParsedReply, ParseError> {
    parse_reasoner_output_with(raw, DEFAULT_REFUSAL_MARKER)
}
