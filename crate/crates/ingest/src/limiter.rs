use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::sync::{OwnedSemaphorePermit, Semaphore};
use tokio::time::Instant;

use crate::config::CrawlConfig;

/// Per-host concurrency cap plus minimum spacing between request starts.
#[derive(Debug)]
pub struct RateLimiter {
    max_concurrent: usize,
    min_interval: Duration,
    hosts: Mutex<HashMap<String, Arc<HostSlot>>>,
}

#[derive(Debug)]
struct HostSlot {
    in_flight: Arc<Semaphore>,
    next_start: Mutex<Option<Instant>>,
}

/// Held for the duration of one request.
#[derive(Debug)]
pub struct SlotPermit {
    _permit: OwnedSemaphorePermit,
}

impl RateLimiter {
    pub fn new(max_concurrent: usize, min_interval: Duration) -> Self {
        Self {
            max_concurrent: max_concurrent.max(1),
            min_interval,
            hosts: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_config(config: &CrawlConfig) -> Self {
        Self::new(config.max_concurrent_per_host, config.min_request_interval())
    }

    pub fn min_interval(&self) -> Duration {
        self.min_interval
    }

    fn slot(&self, host: &str) -> Arc<HostSlot> {
        let mut hosts = self.hosts.lock().unwrap();
        hosts
            .entry(host.to_string())
            .or_insert_with(|| {
                Arc::new(HostSlot {
                    in_flight: Arc::new(Semaphore::new(self.max_concurrent)),
                    next_start: Mutex::new(None),
                })
            })
            .clone()
    }

    /// Waits until a request to `host` may start.
    pub async fn acquire(&self, host: &str) -> SlotPermit {
        let slot = self.slot(host);
        let permit = slot.in_flight.clone().acquire_owned().await.expect("semaphore is never closed");
        let start = {
            let mut next = slot.next_start.lock().unwrap();
            let now = Instant::now();
            let start = next.map_or(now, |t| t.max(now));
            *next = Some(start + self.min_interval);
            start
        };
        tokio::time::sleep_until(start).await;
        SlotPermit { _permit: permit }
    }
}
