use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use log::{info, warn};
use nftport_core::model::{collection_index_json, load_collection_index, CollectionRef, Dataset, TokenRef};

use crate::checkpoint::{write_atomic, CrawlCheckpoint, TokenList};
use crate::config::CrawlConfig;
use crate::crawler::Crawler;
use crate::http::HttpClient;
use crate::CrawlError;

pub const COLLECTION_INDEX_FILE: &str = "collections.json";
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Dataset destination; defaults to `dataset.json` in the checkpoint directory.
    pub output: Option<PathBuf>,
    /// Stop after this many tokens have been checkpointed in this run.
    pub stop_after_tokens: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlSummary {
    pub dataset: PathBuf,
    pub collections: usize,
    pub tokens: usize,
    pub failed_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CrawlOutcome {
    Completed(CrawlSummary),
    /// Stopped at a checkpoint boundary; running again resumes.
    Interrupted { tokens_this_run: usize },
}

/// Discover, enumerate and fetch everything, resuming from `checkpoint_dir`.
/// Returns the dataset path.
pub async fn run_crawl(config: &CrawlConfig, checkpoint_dir: &Path) -> Result<PathBuf, CrawlError> {
    match run_crawl_with(config, checkpoint_dir, &RunOptions::default()).await? {
        CrawlOutcome::Completed(summary) => Ok(summary.dataset),
        CrawlOutcome::Interrupted { .. } => unreachable!("no stop condition was set"),
    }
}

pub async fn run_crawl_with(config: &CrawlConfig, checkpoint_dir: &Path, options: &RunOptions) -> Result<CrawlOutcome, CrawlError> {
    config.validate()?;
    std::fs::create_dir_all(checkpoint_dir)?;
    let mut checkpoint = CrawlCheckpoint::load(checkpoint_dir)?;

    let jar = match (&checkpoint.cookies, config.cookie_persistence) {
        (Some(saved), true) => HttpClient::import_cookies(saved)?,
        _ => Default::default(),
    };
    let crawler = Crawler::with_client(config.clone(), HttpClient::with_cookies(config, jar)?);
    let progress = crawler.progress();
    let save = |cp: &mut CrawlCheckpoint| -> Result<(), CrawlError> {
        cp.in_progress = progress.borrow().clone();
        if config.cookie_persistence {
            cp.cookies = Some(crawler.http().export_cookies());
        }
        cp.save(checkpoint_dir)
    };

    let index_path = checkpoint_dir.join(COLLECTION_INDEX_FILE);
    let collections: Vec<CollectionRef> = if index_path.exists() {
        load_collection_index(&index_path)?
    } else {
        let found = crawler.discover_collections().await?;
        write_atomic(&index_path, collection_index_json(&found).as_bytes())?;
        found
    };

    let mut done_this_run = 0;
    let stop_reached = |n: usize| options.stop_after_tokens.is_some_and(|limit| n >= limit);

    for collection in &collections {
        if checkpoint.completed_collections.contains(&collection.collection_id) {
            continue;
        }
        if !checkpoint.token_lists.contains_key(&collection.collection_id) {
            let listed = crawler.enumerate_tokens(collection).await;
            checkpoint.token_lists.insert(
                collection.collection_id.clone(),
                TokenList {
                    series_name: collection.collection_name.clone(),
                    tokens: listed.tokens.iter().map(|t| t.token.clone()).collect(),
                    terminal: listed.terminal.status,
                },
            );
            save(&mut checkpoint)?;
        }

        let list = &checkpoint.token_lists[&collection.collection_id];
        let pending: Vec<TokenRef> = list
            .tokens
            .iter()
            .map(|t| TokenRef::new(list.series_name.clone(), t.clone()))
            .filter(|t| !checkpoint.is_token_done(t))
            .collect();

        let mut fetches = stream::iter(pending)
            .map(|token| {
                let crawler = &crawler;
                async move {
                    let result = crawler.fetch_trade_history(&token).await;
                    (token, result)
                }
            })
            .buffer_unordered(config.max_concurrent_per_host);

        while let Some((token, result)) = fetches.next().await {
            match result {
                Ok(fetched) => checkpoint.record_history(&fetched.series),
                Err(e @ CrawlError::TokenFailed { .. }) => {
                    warn!("{e}");
                    checkpoint.record_failure(&token);
                }
                Err(e) => return Err(e),
            }
            save(&mut checkpoint)?;
            done_this_run += 1;
            if stop_reached(done_this_run) {
                info!("stopping after {done_this_run} tokens");
                return Ok(CrawlOutcome::Interrupted {
                    tokens_this_run: done_this_run,
                });
            }
        }
        drop(fetches);
        checkpoint.completed_collections.insert(collection.collection_id.clone());
        save(&mut checkpoint)?;
    }

    let dataset = assemble_dataset(&collections, &checkpoint);
    let output = options.output.clone().unwrap_or_else(|| checkpoint_dir.join(DATASET_FILE));
    write_atomic(&output, dataset.to_canonical_json().as_bytes())?;
    info!("wrote {} tokens to {}", dataset.token_count(), output.display());
    Ok(CrawlOutcome::Completed(CrawlSummary {
        dataset: output,
        collections: collections.len(),
        tokens: dataset.token_count(),
        failed_tokens: checkpoint.failed_tokens.len(),
    }))
}

/// Completed histories in collection order, then token-list order.
fn assemble_dataset(collections: &[CollectionRef], checkpoint: &CrawlCheckpoint) -> Dataset {
    let mut dataset = Dataset::new();
    for collection in collections {
        let Some(list) = checkpoint.token_lists.get(&collection.collection_id) else {
            continue;
        };
        for token in &list.tokens {
            if let Some(series) = checkpoint.history(&TokenRef::new(list.series_name.clone(), token.clone())) {
                dataset.push(series);
            }
        }
    }
    dataset
}
