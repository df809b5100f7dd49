//! Regex extraction from raw marketplace bodies.
//!
//! The overview scanner does not parse JSON: it runs three independent
//! patterns over the text and pairs the i-th match of each, so it works on
//! rendered page source as well as API bodies.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;

use crate::model::{CollectionRef, TradeEvent};

static COLLECTION_ID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""collection_id":"([A-Za-z0-9]*)""#).unwrap());
static VOLUME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""volume":([.0-9]*),"#).unwrap());
// Stops at the first unescaped quote; escaped characters are kept and decoded.
static COLLECTION_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""collection_name":\s*"((?:[^"\\\n]|\\.)*)""#).unwrap());
static INTERNAL_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""id":"([A-Za-z0-9]*)""#).unwrap());
static TOKEN_LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"<a href="/token/([a-zA-Z0-9]*)""#).unwrap());
static HAS_NEXT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""?has_next"?\s*:\s*true"#).unwrap());

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExtractError {
    #[error("overview layout drift: {ids} collection_id, {volumes} volume, {names} collection_name matches")]
    CountMismatch { ids: usize, volumes: usize, names: usize },
    #[error("collection #{index} has an empty collection_id")]
    EmptyCollectionId { index: usize },
    #[error("collection #{index} has unparseable volume `{raw}`")]
    InvalidVolume { index: usize, raw: String },
    #[error("activity page is not a JSON array: {0}")]
    NotAnArray(String),
    #[error("activity #{index}: {reason}")]
    BadActivity { index: usize, reason: String },
}

/// Collections in order of first appearance, deduplicated by id.
pub fn parse_collection_overview(body: &str) -> Result<Vec<CollectionRef>, ExtractError> {
    let ids: Vec<&str> = captures(&COLLECTION_ID, body).collect();
    let volumes: Vec<&str> = captures(&VOLUME, body).collect();
    let names: Vec<&str> = captures(&COLLECTION_NAME, body).collect();
    if ids.len() != volumes.len() || ids.len() != names.len() {
        return Err(ExtractError::CountMismatch {
            ids: ids.len(),
            volumes: volumes.len(),
            names: names.len(),
        });
    }
    let internal: Vec<&str> = captures(&INTERNAL_ID, body).collect();
    let internal_aligned = internal.len() == ids.len();

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (index, ((id, volume), name)) in ids.iter().zip(&volumes).zip(&names).enumerate() {
        if id.is_empty() {
            return Err(ExtractError::EmptyCollectionId { index });
        }
        let volume: f64 = volume.parse().map_err(|_| ExtractError::InvalidVolume {
            index,
            raw: volume.to_string(),
        })?;
        if !seen.insert(*id) {
            continue;
        }
        out.push(CollectionRef {
            collection_id: id.to_string(),
            collection_name: unescape(name),
            volume,
            internal_id: internal_aligned.then(|| internal[index].to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

/// Token addresses linked from a listing page, first-appearance order.
pub fn parse_token_links(body: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    captures(&TOKEN_LINK, body)
        .filter(|t| !t.is_empty() && seen.insert(*t))
        .map(str::to_string)
        .collect()
}

/// Whether a listing page advertises a following page.
pub fn has_next_page(body: &str) -> bool {
    HAS_NEXT.is_match(body)
}

/// Number of `type` substrings in a body; zero marks the end of an activity feed.
pub fn type_key_occurrences(body: &str) -> usize {
    body.matches("type").count()
}

/// Parses one page of the activity feed. No filtering is applied.
pub fn parse_activity_page(body: &str) -> Result<Vec<TradeEvent>, ExtractError> {
    let value: Value = serde_json::from_str(body).map_err(|e| ExtractError::NotAnArray(e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(ExtractError::NotAnArray(format!("found {}", kind(&value))));
    };
    items
        .iter()
        .enumerate()
        .map(|(index, item)| {
            let bad = |reason: String| ExtractError::BadActivity { index, reason };
            let obj = item.as_object().ok_or_else(|| bad(format!("expected object, found {}", kind(item))))?;
            let field = |key: &str| obj.get(key).ok_or_else(|| bad(format!("missing key `{key}`")));
            let event_type = match field("type")? {
                Value::String(s) => s.clone(),
                other => return Err(bad(format!("`type` must be a string, found {}", kind(other)))),
            };
            let block_time = coerce_seconds(field("blockTime")?).ok_or_else(|| bad("`blockTime` is not a time".into()))?;
            let price = coerce_decimal(field("price")?).ok_or_else(|| bad("`price` is not a number".into()))?;
            Ok(TradeEvent {
                event_type,
                block_time,
                price,
            })
        })
        .collect()
}

fn captures<'a>(re: &'a Regex, body: &'a str) -> impl Iterator<Item = &'a str> + 'a {
    re.captures_iter(body).map(|c| c.get(1).map_or("", |m| m.as_str()))
}

fn unescape(raw: &str) -> String {
    if !raw.contains('\\') {
        return raw.to_string();
    }
    serde_json::from_str::<String>(&format!("\"{raw}\"")).unwrap_or_else(|_| raw.to_string())
}

fn coerce_seconds(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().filter(|f| f.is_finite()).map(|f| f.floor() as i64)),
        Value::String(s) => s.trim().parse::<i64>().ok(),
        _ => None,
    }
}

fn coerce_decimal(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .filter(|f| f.is_finite())
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}
