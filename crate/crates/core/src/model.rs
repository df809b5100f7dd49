//! Domain types and the on-disk dataset schema.
//!
//! A dataset file is a JSON object keyed by series (collection) name. Each
//! value is a list of token records with parallel `history` (epoch seconds)
//! and `price` arrays:
//!
//! ```json
//! {
//!   "Froganas": [
//!     { "token": "5K9Mwj6a...", "history": [1711308573, 1711309000], "price": [1.5, 1.7] }
//!   ]
//! }
//! ```
//!
//! Series keys are written in lexicographic order and record keys in the
//! order `token`, `history`, `price`, so a file written by
//! [`Dataset::to_canonical_json`] round-trips byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Request header carrying the proxy identity the client is using.
///
/// The replay server logs it so tests can observe proxy rotation without
/// running real proxies.
pub const PROXY_IDENTITY_HEADER: &str = "x-proxy-identity";

/// Activity type tag of an executed sale.
pub const BUY_NOW: &str = "buyNow";

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("malformed dataset at `{path}`: {message}")]
    Malformed { path: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One entry of the collection index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionRef {
    pub collection_id: String,
    pub collection_name: String,
    pub volume: f64,
    #[serde(rename = "id", default, skip_serializing_if = "Option::is_none")]
    pub internal_id: Option<String>,
}

impl CollectionRef {
    pub fn is_valid(&self) -> bool {
        is_alphanumeric_key(&self.collection_id) && self.volume >= 0.0 && self.volume.is_finite()
    }
}

/// A token address together with the series it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenRef {
    pub token: String,
    pub series_name: String,
}

impl TokenRef {
    pub fn new(series_name: impl Into<String>, token: impl Into<String>) -> Self {
        Self {
            token: token.into(),
            series_name: series_name.into(),
        }
    }
}

impl fmt::Display for TokenRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.series_name, self.token)
    }
}

/// A single marketplace activity record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeEvent {
    #[serde(rename = "type")]
    pub event_type: String,
    #[serde(rename = "blockTime")]
    pub block_time: i64,
    pub price: f64,
}

impl TradeEvent {
    pub fn is_sale(&self) -> bool {
        self.event_type == BUY_NOW
    }
}

/// Trade observations of one token: parallel timestamp and price lists.
///
/// Construction does not enforce the invariants; raw series straight from a
/// file may be unsorted or carry bad prices. Use
/// [`crate::returns::clean_series`] before computing anything on them.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub token: TokenRef,
    pub timestamps: Vec<i64>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(token: TokenRef, timestamps: Vec<i64>, prices: Vec<f64>) -> Self {
        Self {
            token,
            timestamps,
            prices,
        }
    }

    pub fn empty(token: TokenRef) -> Self {
        Self::new(token, Vec::new(), Vec::new())
    }

    pub fn from_events<'a>(token: TokenRef, events: impl IntoIterator<Item = &'a TradeEvent>) -> Self {
        let (timestamps, prices) = events.into_iter().map(|e| (e.block_time, e.price)).unzip();
        Self::new(token, timestamps, prices)
    }

    /// Number of observations (the shorter list if lengths disagree).
    pub fn len(&self) -> usize {
        self.timestamps.len().min(self.prices.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn observations(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.timestamps.iter().copied().zip(self.prices.iter().copied())
    }

    pub fn first_timestamp(&self) -> Option<i64> {
        self.timestamps.first().copied()
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.timestamps.last().copied()
    }
}

/// Simple and per-second equivalent return of one interval between trades.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalReturn {
    pub simple_return: f64,
    pub delta_seconds: i64,
    pub adjusted_return: f64,
}

/// Time-weighted return of one token over its whole history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSummary {
    #[serde(flatten)]
    pub token: TokenRef,
    pub total_return: f64,
    pub interval_count: usize,
}

/// Expected returns and covariance of a set of assets on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub assets: Vec<TokenRef>,
    pub mean_returns: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub grid_period_seconds: i64,
    /// Inclusive `[start, end]` of the resampling window.
    pub window: (i64, i64),
    pub ridge_applied: bool,
    /// Indices of assets with zero variance and zero mean excess return.
    pub degenerate_assets: Vec<usize>,
}

impl MomentEstimate {
    /// Builds an estimate directly from moments, e.g. for synthetic problems.
    pub fn from_moments(assets: Vec<TokenRef>, mean_returns: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self {
            assets,
            mean_returns,
            covariance,
            grid_period_seconds: 1,
            window: (0, 0),
            ridge_applied: false,
            degenerate_assets: Vec::new(),
        }
    }

    pub fn asset_count(&self) -> usize {
        self.mean_returns.len()
    }
}

/// Long-only portfolio weights over a set of tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioAllocation {
    pub assets: Vec<TokenRef>,
    pub weights: Vec<f64>,
    pub sharpe: f64,
    pub risk_free_rate: f64,
}

impl PortfolioAllocation {
    pub fn series_name(&self) -> Option<&str> {
        self.assets.first().map(|a| a.series_name.as_str())
    }

    /// `(asset, weight)` pairs in descending weight order; ties by token.
    pub fn ranked(&self) -> Vec<(&TokenRef, f64)> {
        let mut rows: Vec<_> = self.assets.iter().zip(self.weights.iter().copied()).collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.token.cmp(&b.0.token)));
        rows
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRecord {
    token: String,
    history: Vec<i64>,
    price: Vec<f64>,
}

/// Trade histories grouped by series name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    series: BTreeMap<String, Vec<PriceSeries>>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a series under its token's `series_name`.
    pub fn push(&mut self, series: PriceSeries) {
        self.series
            .entry(series.token.series_name.clone())
            .or_default()
            .push(series);
    }

    /// Replaces the token list of one series.
    pub fn insert_series(&mut self, name: impl Into<String>, tokens: Vec<PriceSeries>) {
        self.series.insert(name.into(), tokens);
    }

    pub fn get(&self, series_name: &str) -> Option<&[PriceSeries]> {
        self.series.get(series_name).map(Vec::as_slice)
    }

    pub fn series(&self) -> &BTreeMap<String, Vec<PriceSeries>> {
        &self.series
    }

    pub fn series_names(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &PriceSeries> {
        self.series.values().flatten()
    }

    pub fn token_count(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Applies `f` to every series, keeping the grouping and order.
    pub fn map_series(&self, mut f: impl FnMut(&PriceSeries) -> PriceSeries) -> Dataset {
        let series = self
            .series
            .iter()
            .map(|(name, tokens)| (name.clone(), tokens.iter().map(&mut f).collect()))
            .collect();
        Dataset { series }
    }

    pub fn from_json_str(text: &str) -> Result<Self, SchemaError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: BTreeMap<String, Vec<SeriesRecord>> =
            serde_path_to_error::deserialize(de).map_err(|err| SchemaError::Malformed {
                path: err.path().to_string(),
                message: err.inner().to_string(),
            })?;
        let series = raw
            .into_iter()
            .map(|(name, records)| {
                let tokens = records
                    .into_iter()
                    .map(|r| PriceSeries::new(TokenRef::new(name.clone(), r.token), r.history, r.price))
                    .collect();
                (name, tokens)
            })
            .collect();
        Ok(Dataset { series })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical serialization: sorted series keys, two-space indentation,
    /// trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let raw: BTreeMap<&str, Vec<SeriesRecord>> = self
            .series
            .iter()
            .map(|(name, tokens)| {
                let records = tokens
                    .iter()
                    .map(|s| SeriesRecord {
                        token: s.token.token.clone(),
                        history: s.timestamps.clone(),
                        price: s.prices.clone(),
                    })
                    .collect();
                (name.as_str(), records)
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&raw).expect("dataset serialization is infallible");
        out.push('\n');
        out
    }
}

/// Reads a collection index file.
pub fn load_collection_index(path: impl AsRef<Path>) -> Result<Vec<CollectionRef>, SchemaError> {
    let text = std::fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|err| SchemaError::Malformed {
        path: err.path().to_string(),
        message: err.inner().to_string(),
    })
}

pub fn collection_index_json(collections: &[CollectionRef]) -> String {
    let mut out = serde_json::to_string_pretty(collections).expect("index serialization is infallible");
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    InvalidToken,
    SeriesMismatch,
    DuplicateToken,
    TokenInMultipleSeries,
    LengthMismatch,
    NonIncreasingTimestamps,
    NonPositiveTimestamp,
    NonPositivePrice,
    NonFinitePrice,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Rule::InvalidToken => "token must match [a-zA-Z0-9]+",
            Rule::SeriesMismatch => "token series_name differs from its series key",
            Rule::DuplicateToken => "token listed twice in one series",
            Rule::TokenInMultipleSeries => "token appears in more than one series",
            Rule::LengthMismatch => "length mismatch",
            Rule::NonIncreasingTimestamps => "timestamps not strictly increasing",
            Rule::NonPositiveTimestamp => "timestamp must be positive",
            Rule::NonPositivePrice => "price must be positive",
            Rule::NonFinitePrice => "price must be finite",
        };
        f.write_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub series_name: String,
    pub token: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}: {}", self.series_name, self.token, self.rule)
    }
}

/// Checks every type invariant of a dataset. Empty result means valid.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut owner: HashMap<&str, &str> = HashMap::new();

    for (name, tokens) in dataset.series() {
        let mut seen = std::collections::HashSet::new();
        for series in tokens {
            let token = series.token.token.as_str();
            let mut flag = |rule| {
                violations.push(Violation {
                    series_name: name.clone(),
                    token: token.to_string(),
                    rule,
                })
            };
            if !is_alphanumeric_key(token) {
                flag(Rule::InvalidToken);
            }
            if series.token.series_name != *name {
                flag(Rule::SeriesMismatch);
            }
            if !seen.insert(token) {
                flag(Rule::DuplicateToken);
            } else if let Some(other) = owner.insert(token, name.as_str()) {
                if other != name {
                    flag(Rule::TokenInMultipleSeries);
                }
            }
            if series.timestamps.len() != series.prices.len() {
                flag(Rule::LengthMismatch);
            }
            if series.timestamps.windows(2).any(|w| w[1] <= w[0]) {
                flag(Rule::NonIncreasingTimestamps);
            }
            if series.timestamps.iter().any(|&t| t <= 0) {
                flag(Rule::NonPositiveTimestamp);
            }
            if series.prices.iter().any(|p| !p.is_finite()) {
                flag(Rule::NonFinitePrice);
            }
            if series.prices.iter().any(|&p| p <= 0.0) {
                flag(Rule::NonPositivePrice);
            }
        }
    }
    violations
}

pub(crate) fn is_alphanumeric_key(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(name: &str, token: &str, ts: &[i64], ps: &[f64]) -> PriceSeries {
        PriceSeries::new(TokenRef::new(name, token), ts.to_vec(), ps.to_vec())
    }

    #[test]
    fn well_formed_dataset_has_no_violations() {
        let mut ds = Dataset::new();
        ds.push(series("Froganas", "ABC123", &[10, 20], &[1.0, 2.0]));
        assert!(validate_dataset(&ds).is_empty());
    }

    #[test]
    fn repeated_timestamp_is_flagged() {
        let mut ds = Dataset::new();
        ds.push(series("S", "T1", &[10, 10], &[1.0, 2.0]));
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule.to_string(), "timestamps not strictly increasing");
    }

    #[test]
    fn short_price_list_is_flagged() {
        let mut ds = Dataset::new();
        ds.push(series("S", "T1", &[10, 20], &[1.0]));
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::LengthMismatch);
        assert_eq!(v[0].to_string(), "S/T1: length mismatch");
    }

    #[test]
    fn token_shared_between_series_is_flagged() {
        let mut ds = Dataset::new();
        ds.push(series("A", "T1", &[1], &[1.0]));
        ds.push(series("B", "T1", &[1], &[1.0]));
        let rules: Vec<_> = validate_dataset(&ds).into_iter().map(|v| v.rule).collect();
        assert_eq!(rules, vec![Rule::TokenInMultipleSeries]);
    }

    #[test]
    fn bad_token_and_prices_are_flagged() {
        let mut ds = Dataset::new();
        ds.push(series("A", "no-dash", &[0, 5], &[-1.0, 2.0]));
        let rules: Vec<_> = validate_dataset(&ds).into_iter().map(|v| v.rule).collect();
        assert_eq!(
            rules,
            vec![Rule::InvalidToken, Rule::NonPositiveTimestamp, Rule::NonPositivePrice]
        );
    }

    #[test]
    fn malformed_file_names_first_bad_element() {
        let text = r#"{"S": [{"token": "A", "history": [1, "x"], "price": [1.0, 2.0]}]}"#;
        match Dataset::from_json_str(text) {
            Err(SchemaError::Malformed { path, .. }) => assert_eq!(path, "S[0].history[1]"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn canonical_format_round_trips() {
        let mut ds = Dataset::new();
        ds.push(series("Zeta", "Z1", &[5, 9], &[0.25, 3.0]));
        ds.push(series("Alpha", "A1", &[1711308573], &[1.5]));
        ds.push(series("Alpha", "A2", &[], &[]));
        let text = ds.to_canonical_json();
        assert!(text.find("Alpha").unwrap() < text.find("Zeta").unwrap());
        let back = Dataset::from_json_str(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_canonical_json(), text);
    }

    #[test]
    fn empty_dataset_serializes_as_empty_object() {
        assert_eq!(Dataset::new().to_canonical_json(), "{}\n");
    }

    #[test]
    fn collection_index_uses_id_key() {
        let c = CollectionRef {
            collection_id: "4Q2C5S930M9c9e96b".into(),
            collection_name: "Frogman".into(),
            volume: 3000000.0,
            internal_id: Some("A2MxSTGcBGTRyK97K".into()),
        };
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["id"], "A2MxSTGcBGTRyK97K");
        assert!(c.is_valid());
    }
}
