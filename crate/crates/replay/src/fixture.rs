use std::collections::HashSet;
use std::ops::RangeInclusive;

use nftport_core::model::{CollectionRef, TradeEvent, BUY_NOW};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Everything the replay server knows about: collections, their tokens and
/// each token's activity feed, plus an optional fault schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub seed: u64,
    pub collections: Vec<FixtureCollection>,
    #[serde(default)]
    pub fault_schedule: Vec<FaultRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCollection {
    #[serde(flatten)]
    pub collection: CollectionRef,
    pub tokens: Vec<FixtureToken>,
}

/// One token and its activity feed in chronological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureToken {
    pub token: String,
    pub activities: Vec<TradeEvent>,
}

impl FixtureToken {
    pub fn sales(&self) -> impl Iterator<Item = &TradeEvent> {
        self.activities.iter().filter(|e| e.is_sale())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fault {
    #[serde(rename = "HTTP_403")]
    Http403,
    #[serde(rename = "HTTP_429")]
    Http429,
    #[serde(rename = "HTTP_503")]
    Http503,
    /// Hold the request without answering until the client gives up.
    #[serde(rename = "TIMEOUT")]
    Timeout,
    /// Drop the connection without a response.
    #[serde(rename = "RESET")]
    Reset,
    /// `200 OK` with a zero-length body.
    #[serde(rename = "EMPTY_BODY")]
    EmptyBody,
}

/// Matches requests by path prefix and, optionally, a query substring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMatcher {
    pub path_prefix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_contains: Option<String>,
}

impl RequestMatcher {
    pub fn path(prefix: impl Into<String>) -> Self {
        Self {
            path_prefix: prefix.into(),
            query_contains: None,
        }
    }

    pub fn with_query(mut self, fragment: impl Into<String>) -> Self {
        self.query_contains = Some(fragment.into());
        self
    }

    pub fn matches(&self, path: &str, query: &str) -> bool {
        path.starts_with(&self.path_prefix) && self.query_contains.as_deref().is_none_or(|q| query.contains(q))
    }
}

/// Applies `fault` to the `occurrence`-th (zero-based) request matching `matcher`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRule {
    pub matcher: RequestMatcher,
    pub fault: Fault,
    pub occurrence: usize,
}

impl Fixture {
    pub fn with_fault(mut self, matcher: RequestMatcher, fault: Fault, occurrence: usize) -> Self {
        self.fault_schedule.push(FaultRule {
            matcher,
            fault,
            occurrence,
        });
        self
    }

    pub fn token_count(&self) -> usize {
        self.collections.iter().map(|c| c.tokens.len()).sum()
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("fixture serialization is infallible");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub seed: u64,
    pub collections: usize,
    pub tokens_per_collection: usize,
    /// Number of `buyNow` events per token.
    pub trades_per_token: RangeInclusive<usize>,
    /// Number of listing, bid and cancel events mixed into each feed.
    pub non_sale_events_per_token: RangeInclusive<usize>,
}

impl FixtureParams {
    pub fn new(seed: u64, collections: usize, tokens_per_collection: usize, trades_per_token: RangeInclusive<usize>) -> Self {
        Self {
            seed,
            collections,
            tokens_per_collection,
            trades_per_token,
            non_sale_events_per_token: 0..=0,
        }
    }

    pub fn with_non_sale_events(mut self, range: RangeInclusive<usize>) -> Self {
        self.non_sale_events_per_token = range;
        self
    }

    pub fn generate(&self) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut used_keys = HashSet::new();
        let mut used_volumes = HashSet::new();
        let walk = Normal::new(0.003, 0.08).expect("valid normal");

        let collections = (0..self.collections)
            .map(|i| {
                let collection_id = unique_key(&mut rng, &mut used_keys, 17, ALNUM);
                let internal_id = unique_key(&mut rng, &mut used_keys, 17, ALNUM);
                let volume = loop {
                    let v: u64 = rng.random_range(10_000..100_000_000);
                    if used_volumes.insert(v) {
                        break v as f64;
                    }
                };
                let name = format!(
                    "{} {} {i}",
                    ADJECTIVES[rng.random_range(0..ADJECTIVES.len())],
                    NOUNS[rng.random_range(0..NOUNS.len())]
                );
                let tokens = (0..self.tokens_per_collection)
                    .map(|_| {
                        let token = unique_key(&mut rng, &mut used_keys, 44, BASE58);
                        let activities = self.activities(&mut rng, &walk);
                        FixtureToken { token, activities }
                    })
                    .collect();
                FixtureCollection {
                    collection: CollectionRef {
                        collection_id,
                        collection_name: name,
                        volume,
                        internal_id: Some(internal_id),
                    },
                    tokens,
                }
            })
            .collect();

        Fixture {
            seed: self.seed,
            collections,
            fault_schedule: Vec::new(),
        }
    }

    fn activities(&self, rng: &mut ChaCha8Rng, walk: &Normal<f64>) -> Vec<TradeEvent> {
        let sales = rng.random_range(self.trades_per_token.clone());
        let others = rng.random_range(self.non_sale_events_per_token.clone());
        let total = sales + others;
        let mut is_other = vec![false; total];
        for i in sample(rng, total, others).iter() {
            is_other[i] = true;
        }

        let mut t: i64 = 1_690_000_000 + rng.random_range(0..30 * 86_400);
        let mut price: f64 = rng.random_range(0.5..80.0);
        is_other
            .into_iter()
            .map(|other| {
                t += rng.random_range(60..=3 * 86_400);
                if other {
                    let kind = NON_SALE[rng.random_range(0..NON_SALE.len())];
                    TradeEvent {
                        event_type: kind.to_string(),
                        block_time: t,
                        price: round6(price * rng.random_range(0.9..1.3)),
                    }
                } else {
                    price = (price * walk.sample(rng).exp()).max(0.001);
                    TradeEvent {
                        event_type: BUY_NOW.to_string(),
                        block_time: t,
                        price: round6(price),
                    }
                }
            })
            .collect()
    }
}

/// `seed`-determined fixture with only sale events.
pub fn generate_fixture(
    seed: u64,
    n_collections: usize,
    tokens_per_collection: usize,
    trades_per_token: RangeInclusive<usize>,
) -> Fixture {
    FixtureParams::new(seed, n_collections, tokens_per_collection, trades_per_token).generate()
}

fn round6(x: f64) -> f64 {
    ((x * 1e6).round() / 1e6).max(1e-6)
}

const ALNUM: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
const BASE58: &[u8] = b"123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";
const NON_SALE: &[&str] = &["list", "bid", "cancelBid", "delist"];
const ADJECTIVES: &[&str] = &["Mad", "Famous", "Degen", "Okay", "Galactic", "Frog", "Solana", "Blood"];
const NOUNS: &[&str] = &["Lads", "Foxes", "Apes", "Bears", "Geckos", "Monkeys", "Cats", "Passes"];

fn unique_key(rng: &mut ChaCha8Rng, used: &mut HashSet<String>, len: usize, alphabet: &[u8]) -> String {
    loop {
        let key: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())] as char).collect();
        if used.insert(key.clone()) {
            return key;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_fixture() {
        let a = generate_fixture(42, 3, 4, 0..=20).to_json();
        let b = generate_fixture(42, 3, 4, 0..=20).to_json();
        assert_eq!(a, b);
        assert_ne!(a, generate_fixture(43, 3, 4, 0..=20).to_json());
    }

    #[test]
    fn zero_collections_is_empty() {
        let f = generate_fixture(1, 0, 10, 1..=5);
        assert!(f.collections.is_empty());
    }

    #[test]
    fn zero_trade_range_leaves_histories_empty() {
        let f = generate_fixture(9, 2, 3, 0..=0);
        assert!(f.collections.iter().flat_map(|c| &c.tokens).all(|t| t.activities.is_empty()));
    }

    #[test]
    fn generated_feeds_are_well_formed() {
        let f = FixtureParams::new(5, 4, 5, 1..=40).with_non_sale_events(0..=10).generate();
        let volumes: HashSet<u64> = f.collections.iter().map(|c| c.collection.volume as u64).collect();
        assert_eq!(volumes.len(), 4);
        for c in &f.collections {
            assert!(c.collection.is_valid());
            for t in &c.tokens {
                assert!(t.token.bytes().all(|b| b.is_ascii_alphanumeric()));
                assert!(t.activities.windows(2).all(|w| w[0].block_time < w[1].block_time));
                assert!(t.activities.iter().all(|e| e.price > 0.0));
                assert!(t.sales().count() >= 1);
            }
        }
    }

    #[test]
    fn fault_schedule_round_trips() {
        let f = generate_fixture(1, 1, 1, 1..=1).with_fault(
            RequestMatcher::path("/collections").with_query("page=1"),
            Fault::Http403,
            0,
        );
        let json = f.to_json();
        assert!(json.contains("\"HTTP_403\""));
        assert_eq!(Fixture::from_json(&json).unwrap(), f);
    }
}
