#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use nftport_ingest::CrawlConfig;
use nftport_replay::{serve_with, Fixture, ReplayServer, ServeOptions};
use sha2::{Digest, Sha256};

pub async fn start(fixture: Fixture) -> ReplayServer {
    let options = ServeOptions {
        stall: Duration::from_secs(10),
        ..Default::default()
    };
    serve_with(fixture, "127.0.0.1:0".parse().unwrap(), options).await.unwrap()
}

/// Limiter effectively disabled so functional tests run quickly.
pub fn fast_config(server: &ReplayServer) -> CrawlConfig {
    CrawlConfig {
        qps_limit: 10_000.0,
        download_delay_seconds: 0.0,
        request_timeout_seconds: 1,
        retry_backoff_ms: 10,
        route_through_proxies: false,
        ..CrawlConfig::with_endpoint(server.base_url())
    }
}

pub fn sha256_file(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}
