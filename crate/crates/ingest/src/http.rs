use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use log::{debug, warn};
use nftport_core::model::PROXY_IDENTITY_HEADER;
use reqwest::header::{HeaderMap, HeaderValue, ACCEPT};
use reqwest::StatusCode;
use reqwest_cookie_store::{CookieStore, CookieStoreMutex};
use url::Url;

use crate::config::CrawlConfig;
use crate::limiter::RateLimiter;
use crate::CrawlError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("request timed out")]
    Timeout,
    #[error("connection reset: {0}")]
    Reset(String),
    #[error("throttled with HTTP {0}")]
    Throttled(u16),
    #[error("forbidden (HTTP 403)")]
    Forbidden,
    #[error("unexpected HTTP {0}")]
    Status(u16),
    #[error("unreadable body: {0}")]
    Body(String),
}

impl FetchError {
    /// Worth one more attempt after a backoff.
    pub fn is_transient(&self) -> bool {
        !matches!(self, FetchError::Status(404))
    }

    fn from_reqwest(err: reqwest::Error) -> Self {
        if err.is_timeout() {
            FetchError::Timeout
        } else {
            FetchError::Reset(err.to_string())
        }
    }
}

struct Route {
    identity: Option<String>,
    client: reqwest::Client,
}

/// Rate-limited GET client with a shared cookie jar and a proxy pool that
/// rotates only when the server answers 403.
pub struct HttpClient {
    base: Url,
    host: String,
    routes: Vec<Route>,
    current: AtomicUsize,
    limiter: RateLimiter,
    cookies: Arc<CookieStoreMutex>,
}

impl HttpClient {
    pub fn new(config: &CrawlConfig) -> Result<Self, CrawlError> {
        Self::with_cookies(config, CookieStore::default())
    }

    pub fn with_cookies(config: &CrawlConfig, jar: CookieStore) -> Result<Self, CrawlError> {
        config.validate()?;
        let base = Url::parse(config.endpoint_base.trim_end_matches('/'))
            .map_err(|e| CrawlError::InvalidConfig(e.to_string()))?;
        let host = format!("{}:{}", base.host_str().unwrap_or(""), base.port_or_known_default().unwrap_or(0));
        let cookies = Arc::new(CookieStoreMutex::new(jar));

        let identities: Vec<Option<String>> = if config.proxies.is_empty() {
            vec![None]
        } else {
            config.proxies.iter().cloned().map(Some).collect()
        };
        let routes = identities
            .into_iter()
            .map(|identity| {
                let mut headers = HeaderMap::new();
                headers.insert(
                    ACCEPT,
                    HeaderValue::from_str(&config.accept).map_err(|e| CrawlError::InvalidConfig(e.to_string()))?,
                );
                if let Some(id) = &identity {
                    headers.insert(
                        PROXY_IDENTITY_HEADER,
                        HeaderValue::from_str(id).map_err(|e| CrawlError::InvalidConfig(e.to_string()))?,
                    );
                }
                let mut builder = reqwest::Client::builder()
                    .user_agent(config.user_agent.clone())
                    .default_headers(headers)
                    .timeout(config.request_timeout())
                    .cookie_provider(cookies.clone());
                builder = match (&identity, config.route_through_proxies) {
                    (Some(proxy), true) => builder
                        .proxy(reqwest::Proxy::all(proxy).map_err(|e| CrawlError::InvalidConfig(e.to_string()))?),
                    _ => builder.no_proxy(),
                };
                let client = builder.build().map_err(|e| CrawlError::InvalidConfig(e.to_string()))?;
                Ok(Route { identity, client })
            })
            .collect::<Result<Vec<_>, CrawlError>>()?;

        Ok(Self {
            base,
            host,
            routes,
            current: AtomicUsize::new(0),
            limiter: RateLimiter::from_config(config),
            cookies,
        })
    }

    pub fn base(&self) -> &Url {
        &self.base
    }

    pub fn current_proxy(&self) -> Option<&str> {
        self.routes[self.current.load(Ordering::SeqCst) % self.routes.len()].identity.as_deref()
    }

    pub fn cookie_jar(&self) -> Arc<CookieStoreMutex> {
        self.cookies.clone()
    }

    /// Cookie jar as JSON, session cookies included.
    pub fn export_cookies(&self) -> String {
        let jar = self.cookies.lock().unwrap();
        let mut out = Vec::new();
        cookie_store::serde::json::save_incl_expired_and_nonpersistent(&jar, &mut out).expect("in-memory write");
        String::from_utf8(out).expect("cookie json is utf-8")
    }

    pub fn import_cookies(text: &str) -> Result<CookieStore, CrawlError> {
        cookie_store::serde::json::load_all(text.as_bytes()).map_err(|e| CrawlError::Checkpoint(e.to_string()))
    }

    /// GETs `path_and_query` relative to the endpoint. A 403 rotates to the
    /// next proxy and is retried once.
    pub async fn get(&self, path_and_query: &str) -> Result<String, FetchError> {
        match self.get_once(path_and_query).await {
            Err(FetchError::Forbidden) => {
                if self.routes.len() > 1 {
                    let next = self.current.fetch_add(1, Ordering::SeqCst) + 1;
                    warn!(
                        "403 on {path_and_query}; rotating to proxy {}",
                        self.routes[next % self.routes.len()].identity.as_deref().unwrap_or("-")
                    );
                }
                self.get_once(path_and_query).await
            }
            other => other,
        }
    }

    async fn get_once(&self, path_and_query: &str) -> Result<String, FetchError> {
        let route = &self.routes[self.current.load(Ordering::SeqCst) % self.routes.len()];
        let url = format!("{}{}", self.base.as_str().trim_end_matches('/'), path_and_query);
        let _slot = self.limiter.acquire(&self.host).await;
        debug!("GET {url}");
        let resp = route.client.get(&url).send().await.map_err(FetchError::from_reqwest)?;
        match resp.status() {
            StatusCode::FORBIDDEN => Err(FetchError::Forbidden),
            StatusCode::TOO_MANY_REQUESTS | StatusCode::SERVICE_UNAVAILABLE => {
                Err(FetchError::Throttled(resp.status().as_u16()))
            }
            s if s.is_success() => resp.text().await.map_err(|e| {
                if e.is_timeout() {
                    FetchError::Timeout
                } else {
                    FetchError::Body(e.to_string())
                }
            }),
            s => Err(FetchError::Status(s.as_u16())),
        }
    }
}
