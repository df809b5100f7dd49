use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::CrawlError;

/// Crawler settings. Every field has a default so a config file only has to
/// name what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlConfig {
    pub endpoint_base: String,
    pub collection_limit: usize,
    pub page_size_tokens: usize,
    pub page_size_activities: usize,
    pub qps_limit: f64,
    pub download_delay_seconds: f64,
    pub max_concurrent_per_host: usize,
    pub request_timeout_seconds: u64,
    pub proxies: Vec<String>,
    pub cookie_persistence: bool,
    /// Send requests through `proxies` rather than only tagging them with the
    /// proxy identity header.
    pub route_through_proxies: bool,
    pub user_agent: String,
    pub accept: String,
    /// Pause before the single retry of a throttled or failed page.
    pub retry_backoff_ms: u64,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self {
            endpoint_base: "http://127.0.0.1:8080".to_string(),
            collection_limit: 50,
            page_size_tokens: 50,
            page_size_activities: 500,
            qps_limit: 2.0,
            download_delay_seconds: 0.4,
            max_concurrent_per_host: 2,
            request_timeout_seconds: 20,
            proxies: Vec::new(),
            cookie_persistence: true,
            route_through_proxies: true,
            user_agent: "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0 Safari/537.36"
                .to_string(),
            accept: "text/html,application/json;q=0.9,*/*;q=0.8".to_string(),
            retry_backoff_ms: 1000,
        }
    }
}

impl CrawlConfig {
    pub fn with_endpoint(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint_base: endpoint.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CrawlError> {
        let invalid = |msg: &str| Err(CrawlError::InvalidConfig(msg.to_string()));
        if url::Url::parse(&self.endpoint_base).is_err() {
            return invalid("endpoint_base is not a valid URL");
        }
        if !(self.qps_limit > 0.0 && self.qps_limit.is_finite()) {
            return invalid("qps_limit must be positive");
        }
        if !(self.download_delay_seconds >= 0.0 && self.download_delay_seconds.is_finite()) {
            return invalid("download_delay_seconds must be non-negative");
        }
        if self.page_size_tokens == 0 || self.page_size_activities == 0 {
            return invalid("page sizes must be at least 1");
        }
        if self.request_timeout_seconds == 0 {
            return invalid("request_timeout_seconds must be at least 1");
        }
        if self.max_concurrent_per_host == 0 {
            return invalid("max_concurrent_per_host must be at least 1");
        }
        for proxy in &self.proxies {
            if url::Url::parse(proxy).is_err() {
                return Err(CrawlError::InvalidConfig(format!("invalid proxy URL {proxy}")));
            }
        }
        Ok(())
    }

    /// Minimum spacing between request starts: the larger of the download
    /// delay and the QPS period.
    pub fn min_request_interval(&self) -> Duration {
        Duration::from_secs_f64(self.download_delay_seconds.max(1.0 / self.qps_limit))
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_seconds)
    }

    pub fn retry_backoff(&self) -> Duration {
        Duration::from_millis(self.retry_backoff_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = CrawlConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.min_request_interval(), Duration::from_millis(500));
    }

    #[test]
    fn rejects_bad_values() {
        for cfg in [
            CrawlConfig {
                qps_limit: 0.0,
                ..Default::default()
            },
            CrawlConfig {
                page_size_activities: 0,
                ..Default::default()
            },
            CrawlConfig {
                request_timeout_seconds: 0,
                ..Default::default()
            },
            CrawlConfig::with_endpoint("not a url"),
        ] {
            assert!(matches!(cfg.validate(), Err(CrawlError::InvalidConfig(_))));
        }
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg: CrawlConfig = serde_json::from_str(r#"{"collection_limit": 5}"#).unwrap();
        assert_eq!(cfg.collection_limit, 5);
        assert_eq!(cfg.page_size_activities, 500);
        assert!(serde_json::from_str::<CrawlConfig>(r#"{"colection_limit": 5}"#).is_err());
    }
}
