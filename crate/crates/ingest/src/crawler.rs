use std::collections::HashSet;

use log::{info, warn};
use nftport_core::extract::{has_next_page, parse_activity_page, parse_collection_overview, parse_token_links, type_key_occurrences};
use nftport_core::model::{CollectionRef, PriceSeries, TokenRef};
use nftport_core::returns::clean_series;
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::config::CrawlConfig;
use crate::http::{FetchError, HttpClient};
use crate::state::{PageEvent, PageState, PageStatus};
use crate::CrawlError;

/// Which end-of-data signal stopped an activity pagination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminator {
    EmptyArray,
    NoTypeKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEnumeration {
    pub tokens: Vec<TokenRef>,
    pub terminal: PageState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchedHistory {
    pub series: PriceSeries,
    pub requests: usize,
    pub terminator: Terminator,
}

/// Latest pagination position of a token being fetched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub token: String,
    pub next_offset: usize,
}

pub struct Crawler {
    config: CrawlConfig,
    http: HttpClient,
    progress: watch::Sender<Option<Progress>>,
}

impl Crawler {
    pub fn new(config: CrawlConfig) -> Result<Self, CrawlError> {
        let http = HttpClient::new(&config)?;
        Ok(Self::with_client(config, http))
    }

    pub fn with_client(config: CrawlConfig, http: HttpClient) -> Self {
        let (progress, _) = watch::channel(None);
        Self { config, http, progress }
    }

    pub fn config(&self) -> &CrawlConfig {
        &self.config
    }

    pub fn http(&self) -> &HttpClient {
        &self.http
    }

    pub fn progress(&self) -> watch::Receiver<Option<Progress>> {
        self.progress.subscribe()
    }

    async fn get_with_retry(&self, path: &str) -> Result<String, FetchError> {
        match self.http.get(path).await {
            Err(e) if e.is_transient() => {
                warn!("{path}: {e}; retrying once");
                tokio::time::sleep(self.config.retry_backoff()).await;
                self.http.get(path).await
            }
            other => other,
        }
    }

    /// Top collections by volume, at most `collection_limit` of them.
    pub async fn discover_collections(&self) -> Result<Vec<CollectionRef>, CrawlError> {
        let path = format!(
            "/collections?sort_by=volume&offset=0&limit={}&sort_order=desc",
            self.config.collection_limit
        );
        let body = self.get_with_retry(&path).await.map_err(CrawlError::Discovery)?;
        let mut collections = parse_collection_overview(&body)?;
        collections.sort_by(|a, b| b.volume.total_cmp(&a.volume));
        collections.truncate(self.config.collection_limit);
        info!("discovered {} collections", collections.len());
        Ok(collections)
    }

    /// Walks the token pages of one collection until a terminal state.
    pub async fn enumerate_tokens(&self, collection: &CollectionRef) -> TokenEnumeration {
        let mut state = PageState::default();
        let mut seen = HashSet::new();
        let mut tokens = Vec::new();
        while !state.is_terminal() {
            if state.status == PageStatus::RetryAfterScroll {
                tokio::time::sleep(self.config.retry_backoff()).await;
            }
            let path = format!(
                "/collections/{}/tokens?page={}&limit={}",
                collection.collection_id, state.page, self.config.page_size_tokens
            );
            let event = match self.http.get(&path).await {
                Ok(body) => {
                    let before = tokens.len();
                    for t in parse_token_links(&body) {
                        if seen.insert(t.clone()) {
                            tokens.push(TokenRef::new(collection.collection_name.clone(), t));
                        }
                    }
                    PageEvent::Loaded {
                        new_tokens: tokens.len() - before,
                        has_next: has_next_page(&body),
                    }
                }
                Err(FetchError::Timeout) => PageEvent::TimedOut,
                Err(FetchError::Reset(_)) => PageEvent::ConnectionReset,
                Err(e) => {
                    warn!("{}: token page {}: {e}", collection.collection_name, state.page);
                    PageEvent::Failed
                }
            };
            state = state.next(event);
        }
        info!(
            "{}: {} tokens, ended {:?} at page {}",
            collection.collection_name,
            tokens.len(),
            state.status,
            state.page
        );
        TokenEnumeration { tokens, terminal: state }
    }

    /// Full sale history of one token. Any page that still fails after one
    /// retry discards the whole history.
    pub async fn fetch_trade_history(&self, token: &TokenRef) -> Result<FetchedHistory, CrawlError> {
        let step = self.config.page_size_activities;
        let mut offset = 0;
        let mut requests = 0;
        let mut events = Vec::new();
        let terminator = loop {
            self.progress.send_replace(Some(Progress {
                token: token.token.clone(),
                next_offset: offset,
            }));
            let path = format!("/tokens/{}/activities?offset={offset}&limit={step}", token.token);
            requests += 1;
            let fail = |source| CrawlError::TokenFailed {
                token: token.clone(),
                offset,
                source,
            };
            let body = self.get_with_retry(&path).await.map_err(fail)?;
            if type_key_occurrences(&body) == 0 {
                break if body.trim() == "[]" {
                    Terminator::EmptyArray
                } else {
                    Terminator::NoTypeKey
                };
            }
            let page = match parse_activity_page(&body) {
                Ok(page) => page,
                Err(first) => {
                    warn!("{token}: offset {offset}: {first}; retrying once");
                    tokio::time::sleep(self.config.retry_backoff()).await;
                    requests += 1;
                    let body = self.http.get(&path).await.map_err(fail)?;
                    parse_activity_page(&body).map_err(|e| fail(FetchError::Body(e.to_string())))?
                }
            };
            if page.is_empty() {
                break Terminator::EmptyArray;
            }
            events.extend(page.into_iter().filter(|e| e.is_sale()));
            offset += step;
        };
        info!("{token}: {} sales in {requests} requests, stopped on {terminator:?}", events.len());
        let series = clean_series(&PriceSeries::from_events(token.clone(), &events));
        Ok(FetchedHistory {
            series,
            requests,
            terminator,
        })
    }
}
