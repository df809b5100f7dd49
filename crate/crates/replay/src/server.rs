use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use bytes::Bytes;
use http_body_util::Full;
use hyper::body::Incoming;
use hyper::header::{CONTENT_TYPE, COOKIE, SET_COOKIE, USER_AGENT};
use hyper::server::conn::http1;
use hyper::service::service_fn;
use hyper::{Method, Request, Response, StatusCode};
use hyper_util::rt::TokioIo;
use nftport_core::model::{TradeEvent, PROXY_IDENTITY_HEADER};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::fixture::{Fault, FaultRule, Fixture};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("cannot bind replay server to {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// How long a `TIMEOUT` fault holds the request before answering 504.
    pub stall: Duration,
    pub default_token_page: usize,
    pub default_activity_page: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            stall: Duration::from_secs(30),
            default_token_page: 50,
            default_activity_page: 500,
        }
    }
}

/// One logged request. `status` is `None` when the connection was dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestRecord {
    pub seq: usize,
    pub at: Duration,
    pub method: String,
    pub path: String,
    pub query: String,
    pub proxy_identity: Option<String>,
    pub cookie: Option<String>,
    pub user_agent: Option<String>,
    pub fault: Option<Fault>,
    pub status: Option<u16>,
}

impl RequestRecord {
    pub fn query_param(&self, key: &str) -> Option<String> {
        url::form_urlencoded::parse(self.query.as_bytes())
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.into_owned())
    }
}

struct Catalog {
    /// Collection indices by descending volume.
    by_volume: Vec<usize>,
    collections: HashMap<String, usize>,
    tokens: HashMap<String, (usize, usize)>,
}

struct Log {
    records: Vec<RequestRecord>,
    rule_hits: Vec<usize>,
    sessions: usize,
}

struct State {
    fixture: Fixture,
    catalog: Catalog,
    options: ServeOptions,
    started: Instant,
    log: Mutex<Log>,
}

/// Handle to a running replay server. Dropping it stops the server.
pub struct ReplayServer {
    addr: SocketAddr,
    state: Arc<State>,
    shutdown: watch::Sender<bool>,
    task: Option<JoinHandle<()>>,
}

impl ReplayServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<RequestRecord> {
        self.state.log.lock().unwrap().records.clone()
    }

    pub fn requests_to(&self, path_prefix: &str) -> Vec<RequestRecord> {
        self.requests().into_iter().filter(|r| r.path.starts_with(path_prefix)).collect()
    }

    pub fn fixture(&self) -> &Fixture {
        &self.state.fixture
    }

    pub async fn shutdown(mut self) {
        let _ = self.shutdown.send(true);
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for ReplayServer {
    fn drop(&mut self) {
        let _ = self.shutdown.send(true);
    }
}

pub async fn serve(fixture: Fixture, addr: SocketAddr) -> Result<ReplayServer, ReplayError> {
    serve_with(fixture, addr, ServeOptions::default()).await
}

pub async fn serve_with(fixture: Fixture, addr: SocketAddr, options: ServeOptions) -> Result<ReplayServer, ReplayError> {
    let listener = TcpListener::bind(addr).await.map_err(|source| ReplayError::Bind { addr, source })?;
    let addr = listener.local_addr().map_err(|source| ReplayError::Bind { addr, source })?;

    let mut by_volume: Vec<usize> = (0..fixture.collections.len()).collect();
    by_volume.sort_by(|&a, &b| {
        let (ca, cb) = (&fixture.collections[a].collection, &fixture.collections[b].collection);
        cb.volume.total_cmp(&ca.volume).then_with(|| ca.collection_id.cmp(&cb.collection_id))
    });
    let mut collections = HashMap::new();
    let mut tokens = HashMap::new();
    for (ci, c) in fixture.collections.iter().enumerate() {
        collections.entry(c.collection.collection_id.clone()).or_insert(ci);
        for (ti, t) in c.tokens.iter().enumerate() {
            tokens.entry(t.token.clone()).or_insert((ci, ti));
        }
    }
    let rules = fixture.fault_schedule.len();
    let state = Arc::new(State {
        catalog: Catalog {
            by_volume,
            collections,
            tokens,
        },
        fixture,
        options,
        started: Instant::now(),
        log: Mutex::new(Log {
            records: Vec::new(),
            rule_hits: vec![0; rules],
            sessions: 0,
        }),
    });

    let (shutdown, rx) = watch::channel(false);
    let task = tokio::spawn(accept_loop(listener, state.clone(), rx));
    Ok(ReplayServer {
        addr,
        state,
        shutdown,
        task: Some(task),
    })
}

async fn accept_loop(listener: TcpListener, state: Arc<State>, mut shutdown: watch::Receiver<bool>) {
    loop {
        let stream = tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, _)) => stream,
                Err(_) => continue,
            },
            _ = shutdown.changed() => break,
        };
        let state = state.clone();
        let conn_shutdown = shutdown.clone();
        tokio::spawn(async move {
            let service = service_fn(move |req| {
                let state = state.clone();
                let shutdown = conn_shutdown.clone();
                async move { handle(state, req, shutdown).await }
            });
            let _ = http1::Builder::new().serve_connection(TokioIo::new(stream), service).await;
        });
    }
}

enum Route {
    Collections { limit: usize },
    Tokens { collection: Option<usize>, page: usize, limit: usize },
    Activities { token: Option<(usize, usize)>, offset: usize, limit: usize },
    NotFound,
}

fn route(state: &State, method: &Method, path: &str, query: &str) -> Route {
    if method != Method::GET {
        return Route::NotFound;
    }
    let params: HashMap<String, String> = url::form_urlencoded::parse(query.as_bytes()).into_owned().collect();
    let num = |key: &str, default: usize| params.get(key).and_then(|v| v.parse().ok()).unwrap_or(default);
    let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
    match segments.as_slice() {
        ["collections"] => Route::Collections {
            limit: num("limit", 50),
        },
        ["collections", id, "tokens"] => Route::Tokens {
            collection: state.catalog.collections.get(*id).copied(),
            page: num("page", 0),
            limit: num("limit", state.options.default_token_page).max(1),
        },
        ["tokens", token, "activities"] => Route::Activities {
            token: state.catalog.tokens.get(*token).copied(),
            offset: num("offset", 0),
            limit: num("limit", state.options.default_activity_page).max(1),
        },
        _ => Route::NotFound,
    }
}

async fn handle(
    state: Arc<State>,
    req: Request<Incoming>,
    mut shutdown: watch::Receiver<bool>,
) -> Result<Response<Full<Bytes>>, io::Error> {
    let path = req.uri().path().to_string();
    let query = req.uri().query().unwrap_or("").to_string();
    let header = |name| req.headers().get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
    let proxy_identity = header(PROXY_IDENTITY_HEADER);
    let cookie = header(COOKIE.as_str());
    let user_agent = header(USER_AGENT.as_str());
    let routed = route(&state, req.method(), &path, &query);

    let (seq, fault, new_session) = {
        let mut log = state.log.lock().unwrap();
        let fault = next_fault(&state.fixture.fault_schedule, &mut log.rule_hits, &path, &query);
        let new_session = if has_session(cookie.as_deref()) {
            None
        } else {
            log.sessions += 1;
            Some(log.sessions)
        };
        let seq = log.records.len();
        log.records.push(RequestRecord {
            seq,
            at: state.started.elapsed(),
            method: req.method().to_string(),
            path: path.clone(),
            query: query.clone(),
            proxy_identity,
            cookie,
            user_agent,
            fault,
            status: None,
        });
        (seq, fault, new_session)
    };

    let mut response = match fault {
        Some(Fault::Reset) => return Err(io::Error::new(io::ErrorKind::ConnectionReset, "injected reset")),
        Some(Fault::Timeout) => {
            tokio::select! {
                _ = tokio::time::sleep(state.options.stall) => {}
                _ = shutdown.changed() => {}
            }
            plain(StatusCode::GATEWAY_TIMEOUT, "")
        }
        Some(Fault::Http403) => plain(StatusCode::FORBIDDEN, "forbidden"),
        Some(Fault::Http429) => plain(StatusCode::TOO_MANY_REQUESTS, "slow down"),
        Some(Fault::Http503) => plain(StatusCode::SERVICE_UNAVAILABLE, "unavailable"),
        Some(Fault::EmptyBody) => plain(StatusCode::OK, ""),
        None => respond(&state, routed),
    };
    if let Some(n) = new_session {
        let value = format!("session=s{n}; Path=/");
        response.headers_mut().insert(SET_COOKIE, value.parse().expect("ascii cookie"));
    }

    state.log.lock().unwrap().records[seq].status = Some(response.status().as_u16());
    Ok(response)
}

fn next_fault(schedule: &[FaultRule], hits: &mut [usize], path: &str, query: &str) -> Option<Fault> {
    let mut fault = None;
    for (rule, count) in schedule.iter().zip(hits.iter_mut()) {
        if rule.matcher.matches(path, query) {
            if *count == rule.occurrence && fault.is_none() {
                fault = Some(rule.fault);
            }
            *count += 1;
        }
    }
    fault
}

fn has_session(cookie: Option<&str>) -> bool {
    cookie.is_some_and(|c| c.split(';').any(|kv| kv.trim().starts_with("session=")))
}

fn plain(status: StatusCode, body: &'static str) -> Response<Full<Bytes>> {
    let mut resp = Response::new(Full::new(Bytes::from_static(body.as_bytes())));
    *resp.status_mut() = status;
    resp
}

fn with_body(content_type: &'static str, body: String) -> Response<Full<Bytes>> {
    let mut resp = Response::new(Full::new(Bytes::from(body)));
    resp.headers_mut().insert(CONTENT_TYPE, content_type.parse().expect("static header"));
    resp
}

#[derive(Serialize)]
struct OverviewEntry<'a> {
    collection_id: &'a str,
    volume: f64,
    collection_name: &'a str,
    id: &'a str,
}

#[derive(Serialize)]
struct Overview<'a> {
    success: bool,
    data: Vec<OverviewEntry<'a>>,
}

fn respond(state: &State, route: Route) -> Response<Full<Bytes>> {
    let fixture = &state.fixture;
    match route {
        Route::Collections { limit } => {
            let data = state
                .catalog
                .by_volume
                .iter()
                .take(limit)
                .map(|&i| {
                    let c = &fixture.collections[i].collection;
                    OverviewEntry {
                        collection_id: &c.collection_id,
                        volume: c.volume,
                        collection_name: &c.collection_name,
                        id: c.internal_id.as_deref().unwrap_or(""),
                    }
                })
                .collect();
            let body = serde_json::to_string(&Overview { success: true, data }).expect("serializable");
            with_body("application/json", body)
        }
        Route::Tokens {
            collection: Some(ci),
            page,
            limit,
        } => {
            let tokens = &fixture.collections[ci].tokens;
            let chunk: Vec<&str> = tokens
                .iter()
                .skip(page.saturating_mul(limit))
                .take(limit)
                .map(|t| t.token.as_str())
                .collect();
            let mut body = String::from("<html><body><ul>\n");
            for t in &chunk {
                body.push_str(&format!("<li><a href=\"/token/{t}\">{t}</a></li>\n"));
            }
            body.push_str("</ul>\n<script type=\"application/json\">");
            body.push_str(&format!("{{\"page\":{page},\"has_next\":{}}}", !chunk.is_empty()));
            body.push_str("</script></body></html>\n");
            with_body("text/html; charset=utf-8", body)
        }
        Route::Activities {
            token: Some((ci, ti)),
            offset,
            limit,
        } => {
            let page: Vec<&TradeEvent> = fixture.collections[ci].tokens[ti]
                .activities
                .iter()
                .rev()
                .skip(offset)
                .take(limit)
                .collect();
            with_body("application/json", serde_json::to_string(&page).expect("serializable"))
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}
