use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use nftport_core::model::{PriceSeries, TokenRef};
use serde::{Deserialize, Serialize};

use crate::crawler::Progress;
use crate::state::PageStatus;
use crate::CrawlError;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Token list of one collection as enumerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenList {
    pub series_name: String,
    pub tokens: Vec<String>,
    pub terminal: PageStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredHistory {
    pub history: Vec<i64>,
    pub price: Vec<f64>,
}

/// Durable crawl progress. Work is recorded per token; a history is stored
/// only once it is complete.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrawlCheckpoint {
    pub completed_collections: BTreeSet<String>,
    pub completed_tokens: BTreeSet<(String, String)>,
    pub in_progress: Option<Progress>,
    pub failed_tokens: BTreeSet<(String, String)>,
    pub token_lists: BTreeMap<String, TokenList>,
    pub histories: BTreeMap<String, BTreeMap<String, StoredHistory>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cookies: Option<String>,
}

fn key(token: &TokenRef) -> (String, String) {
    (token.series_name.clone(), token.token.clone())
}

impl CrawlCheckpoint {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join(CHECKPOINT_FILE)
    }

    /// Loads the checkpoint in `dir`, or an empty one if there is none yet.
    pub fn load(dir: &Path) -> Result<Self, CrawlError> {
        let path = Self::path(dir);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CrawlError::Checkpoint(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), CrawlError> {
        let mut text = serde_json::to_string_pretty(self).expect("checkpoint serialization is infallible");
        text.push('\n');
        write_atomic(&Self::path(dir), text.as_bytes())
    }

    pub fn is_token_done(&self, token: &TokenRef) -> bool {
        let k = key(token);
        self.completed_tokens.contains(&k) || self.failed_tokens.contains(&k)
    }

    pub fn record_history(&mut self, series: &PriceSeries) {
        self.histories
            .entry(series.token.series_name.clone())
            .or_default()
            .insert(
                series.token.token.clone(),
                StoredHistory {
                    history: series.timestamps.clone(),
                    price: series.prices.clone(),
                },
            );
        self.completed_tokens.insert(key(&series.token));
    }

    pub fn record_failure(&mut self, token: &TokenRef) {
        self.failed_tokens.insert(key(token));
    }

    pub fn history(&self, token: &TokenRef) -> Option<PriceSeries> {
        let stored = self.histories.get(&token.series_name)?.get(&token.token)?;
        Some(PriceSeries::new(token.clone(), stored.history.clone(), stored.price.clone()))
    }
}

/// Writes via a temporary file in the same directory and renames it over
/// `path`, so readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CrawlError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CrawlError::Io(e.error))?;
    Ok(())
}
