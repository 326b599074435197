//! Pulls the structured record out of a free-text model response.
//!
//! The last fenced code block wins; without one, the last balanced
//! top-level `{...}` in the text is used. Keys are matched
//! case-insensitively with `-`/space folded to `_`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// The seven field names the model is asked to fill, in prompt order.
pub const RECORD_KEYS: [&str; 7] = [
    "target_node",
    "factual_class",
    "counterfactual_class",
    "factual_neighbors",
    "counterfactual_neighbors",
    "factual_features",
    "counterfactual_features",
];

/// What the model claims about the factual/counterfactual pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub target_node: u64,
    pub factual_class: String,
    pub counterfactual_class: String,
    pub factual_neighbors: BTreeSet<u64>,
    pub counterfactual_neighbors: BTreeSet<u64>,
    pub factual_features: BTreeSet<String>,
    pub counterfactual_features: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum ParseError {
    #[error("no JSON object found")]
    NoJson,
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("JSON value is not an object")]
    NotAnObject,
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("cannot coerce `{key}`: {detail}")]
    Uncoercible { key: String, detail: String },
}

impl ParseError {
    /// Stable short label for report columns.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::NoJson => "no_json",
            ParseError::MalformedJson(_) => "malformed_json",
            ParseError::NotAnObject => "not_an_object",
            ParseError::MissingKey(_) => "missing_key",
            ParseError::Uncoercible { .. } => "uncoercible",
        }
    }
}

pub fn normalize_key(key: &str) -> String {
    key.trim()
        .chars()
        .map(|c| match c {
            '-' | ' ' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

/// Trimmed, lowercased form used for class names and words.
pub fn normalize_text(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Contents of the last fenced block, minus an info-string line.
fn last_fenced_block(raw: &str) -> Option<&str> {
    let parts: Vec<&str> = raw.split("```").collect();
    // odd segments sit between an opening and a closing fence
    let closed = if parts.len() % 2 == 1 { parts.len() } else { parts.len() - 1 };
    let block = (1..closed).step_by(2).map(|i| parts[i]).last()?;
    let body = match block.find('\n') {
        Some(nl) if !block[..nl].contains(['{', '[']) => &block[nl + 1..],
        _ => block,
    };
    Some(body.trim())
}

/// Byte spans of balanced top-level `{...}` groups, skipping braces inside
/// JSON strings.
fn balanced_objects(raw: &str) -> Vec<&str> {
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in raw.char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' if depth > 0 => in_string = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push(&raw[start..=i]);
                }
            }
            _ => {}
        }
    }
    spans
}

fn locate_json(raw: &str) -> Result<Value, ParseError> {
    if let Some(block) = last_fenced_block(raw) {
        if !block.is_empty() {
            return serde_json::from_str(block).map_err(|e| ParseError::MalformedJson(e.to_string()));
        }
    }
    let spans = balanced_objects(raw);
    let Some(last) = spans.last() else {
        return Err(ParseError::NoJson);
    };
    serde_json::from_str(last).map_err(|e| ParseError::MalformedJson(e.to_string()))
}

fn uncoercible(key: &str, detail: impl Into<String>) -> ParseError {
    ParseError::Uncoercible {
        key: key.into(),
        detail: detail.into(),
    }
}

fn as_uint(key: &str, v: &Value) -> Result<u64, ParseError> {
    match v {
        Value::Number(n) => n
            .as_u64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64))
            .ok_or_else(|| uncoercible(key, format!("{n} is not a non-negative integer"))),
        Value::String(s) => {
            let t = s.trim();
            if !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) {
                t.parse().map_err(|_| uncoercible(key, format!("`{s}` overflows")))
            } else {
                Err(uncoercible(key, format!("`{s}` is not a node id")))
            }
        }
        other => Err(uncoercible(key, format!("expected integer, got {other}"))),
    }
}

fn as_class(key: &str, v: &Value) -> Result<String, ParseError> {
    match v {
        Value::String(s) => Ok(normalize_text(s)),
        Value::Number(_) => as_uint(key, v).map(|n| n.to_string()),
        other => Err(uncoercible(key, format!("expected class name, got {other}"))),
    }
}

fn as_id_set(key: &str, v: &Value) -> Result<BTreeSet<u64>, ParseError> {
    match v {
        Value::Array(items) => items.iter().map(|i| as_uint(key, i)).collect(),
        other => Err(uncoercible(key, format!("expected list of node ids, got {other}"))),
    }
}

fn as_word_set(key: &str, v: &Value) -> Result<BTreeSet<String>, ParseError> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => Ok(normalize_text(s)),
                other => Err(uncoercible(key, format!("expected word, got {other}"))),
            })
            .filter(|w| w.as_ref().map_or(true, |w| !w.is_empty()))
            .collect(),
        Value::String(s) => Ok(s
            .split(',')
            .map(normalize_text)
            .filter(|w| !w.is_empty())
            .collect()),
        other => Err(uncoercible(key, format!("expected list of words, got {other}"))),
    }
}

/// Parses the structured record from a raw model response.
pub fn parse_extraction(raw: &str) -> Result<ExtractionRecord, ParseError> {
    let value = locate_json(raw)?;
    let Value::Object(obj) = value else {
        return Err(ParseError::NotAnObject);
    };
    let fields: Map<String, Value> = obj.into_iter().map(|(k, v)| (normalize_key(&k), v)).collect();
    let get = |key: &str| fields.get(key).ok_or_else(|| ParseError::MissingKey(key.to_string()));
    // report the first missing key in prompt order before any coercion error
    for key in RECORD_KEYS {
        get(key)?;
    }
    Ok(ExtractionRecord {
        target_node: as_uint("target_node", get("target_node")?)?,
        factual_class: as_class("factual_class", get("factual_class")?)?,
        counterfactual_class: as_class("counterfactual_class", get("counterfactual_class")?)?,
        factual_neighbors: as_id_set("factual_neighbors", get("factual_neighbors")?)?,
        counterfactual_neighbors: as_id_set("counterfactual_neighbors", get("counterfactual_neighbors")?)?,
        factual_features: as_word_set("factual_features", get("factual_features")?)?,
        counterfactual_features: as_word_set("counterfactual_features", get("counterfactual_features")?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{"target_node": 4, "factual_class": "Theory", "counterfactual_class": "Neural_Networks",
        "factual_neighbors": [1, 2], "counterfactual_neighbors": [2], "factual_features": ["graph", "Model"],
        "counterfactual_features": ["graph"]}"#;

    #[test]
    fn fenced_block_is_parsed() {
        let raw = format!("The node changes class.\n```json\n{FULL}\n```\nDone.");
        let rec = parse_extraction(&raw).unwrap();
        assert_eq!(rec.target_node, 4);
        assert_eq!(rec.factual_class, "theory");
        assert_eq!(rec.factual_features, BTreeSet::from(["graph".to_string(), "model".to_string()]));
        assert_eq!(rec.counterfactual_neighbors, BTreeSet::from([2]));
    }

    #[test]
    fn bare_json_after_prose_uses_fallback() {
        let raw = format!("Explanation with a stray {{brace}} first.\n{FULL}");
        assert_eq!(parse_extraction(&raw).unwrap().target_node, 4);
    }

    #[test]
    fn missing_key_is_reported() {
        let mut v: Value = serde_json::from_str(FULL).unwrap();
        v.as_object_mut().unwrap().remove("counterfactual_features");
        let raw = v.to_string();
        assert_eq!(
            parse_extraction(&raw),
            Err(ParseError::MissingKey("counterfactual_features".into()))
        );
    }

    #[test]
    fn keys_are_folded_and_digit_strings_coerced() {
        let raw = r#"{"Target-Node": "7", "FACTUAL CLASS": 2, "counterfactual_class": " Rule_Learning ",
            "factual_neighbors": ["3", 5], "counterfactual_neighbors": [], "factual_features": "a, b",
            "counterfactual_features": []}"#;
        let rec = parse_extraction(raw).unwrap();
        assert_eq!(rec.target_node, 7);
        assert_eq!(rec.factual_class, "2");
        assert_eq!(rec.counterfactual_class, "rule_learning");
        assert_eq!(rec.factual_neighbors, BTreeSet::from([3, 5]));
        assert_eq!(rec.factual_features.len(), 2);
    }

    #[test]
    fn error_variants() {
        assert_eq!(parse_extraction("no json here"), Err(ParseError::NoJson));
        assert!(matches!(parse_extraction("```json\n{\"a\": }\n```"), Err(ParseError::MalformedJson(_))));
        assert_eq!(parse_extraction("```\n[1, 2]\n```"), Err(ParseError::NotAnObject));
        let bad = FULL.replace("[1, 2]", "[\"one\"]");
        assert!(matches!(parse_extraction(&bad), Err(ParseError::Uncoercible { key, .. }) if key == "factual_neighbors"));
    }

    #[test]
    fn last_block_wins() {
        let first = FULL.replace("\"target_node\": 4", "\"target_node\": 1");
        let raw = format!("```json\n{first}\n```\nCorrected:\n```json\n{FULL}\n```");
        assert_eq!(parse_extraction(&raw).unwrap().target_node, 4);
    }

    #[test]
    fn braces_inside_strings_do_not_split_objects() {
        let raw = FULL.replace("\"Theory\"", "\"The}ory\"");
        assert_eq!(parse_extraction(&format!("prose {raw}")).unwrap().factual_class, "the}ory");
    }
}
