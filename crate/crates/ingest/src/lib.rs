//! Crawler for marketplace trade histories: collection discovery, token
//! enumeration and offset-paginated activity fetches, behind a per-host rate
//! limiter with proxy rotation, a shared cookie jar and resumable checkpoints.

pub mod checkpoint;
pub mod config;
pub mod crawler;
pub mod driver;
pub mod http;
pub mod limiter;
pub mod state;

use nftport_core::extract::ExtractError;
use nftport_core::model::{SchemaError, TokenRef};

pub use checkpoint::CrawlCheckpoint;
pub use config::CrawlConfig;
pub use crawler::{Crawler, FetchedHistory, Terminator, TokenEnumeration};
pub use driver::{run_crawl, run_crawl_with, CrawlOutcome, CrawlSummary, RunOptions};
pub use http::{FetchError, HttpClient};
pub use limiter::{RateLimiter, SlotPermit};
pub use state::{PageEvent, PageState, PageStatus};

#[derive(Debug, thiserror::Error)]
pub enum CrawlError {
    #[error("invalid crawl config: {0}")]
    InvalidConfig(String),
    #[error("collection discovery failed: {0}")]
    Discovery(FetchError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("{token}: history fetch failed at offset {offset}: {source}")]
    TokenFailed {
        token: TokenRef,
        offset: usize,
        source: FetchError,
    },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
