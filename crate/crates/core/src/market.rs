//! Coin metadata lookup and website fetching, live over HTTP or from a
//! recorded fixture directory.
//!
//! Fixture layout:
//!
//! ```text
//! <dir>/meta/<QUERY>.json          metadata response body, QUERY normalized
//! <dir>/web/<sha256(url)>.html     page body
//! <dir>/web/<sha256(url)>.redirect target URL (one line), served as a 302
//! <dir>/web/<sha256(url)>.status   HTTP status code to serve instead of 200
//! ```
//!
//! Live and fixture fetches share redirect handling and the size cap; in
//! fixture mode the HTTP transport is never touched.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use url::Url;

use crate::textprep::{RawDocument, DEFAULT_SIZE_LIMIT};

pub const API_KEY_ENV: &str = "CRYPTOHALAL_API_KEY";
pub const DEFAULT_API_BASE: &str = "https://pro-api.coinmarketcap.com";
pub const DEFAULT_API_KEY_HEADER: &str = "X-CMC_PRO_API_KEY";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const MAX_RETRIES: u32 = 2;
pub const MAX_REDIRECTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinMetadata {
    pub ticker: String,
    pub name: String,
    pub website_urls: Vec<String>,
    pub fetched_at: DateTime<Utc>,
}

impl CoinMetadata {
    /// The official site: the first listed URL.
    pub fn website(&self) -> &str {
        &self.website_urls[0]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MarketError {
    #[error("unknown coin `{0}`")]
    UnknownCoin(String),
    #[error("no API key: set {API_KEY_ENV}")]
    MissingApiKey,
    #[error("request to {url} timed out")]
    Timeout { url: String },
    #[error("network error for {url}: {message}")]
    Network { url: String, message: String },
    #[error("malformed metadata response: {0}")]
    MalformedResponse(String),
    #[error("{url} answered HTTP {status}")]
    HttpStatus { url: String, status: u16 },
    #[error("{url} body exceeds the {limit}-byte cap")]
    TooLarge { url: String, limit: usize },
    #[error("too many redirects starting at {url}")]
    RedirectLoop { url: String },
    #[error("not an absolute http(s) URL: {0}")]
    InvalidUrl(String),
    #[error("fixture {path}: {source}")]
    Fixture { path: PathBuf, source: io::Error },
}

impl MarketError {
    /// Failures of the remote side (as opposed to unknown coins or local
    /// configuration).
    pub fn is_upstream(&self) -> bool {
        matches!(
            self,
            MarketError::Timeout { .. }
                | MarketError::Network { .. }
                | MarketError::MalformedResponse(_)
                | MarketError::HttpStatus { .. }
                | MarketError::TooLarge { .. }
                | MarketError::RedirectLoop { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub location: Option<String>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Connect(String),
    /// Body longer than the limit passed to [`Transport::get`].
    TooLarge,
}

/// One HTTP GET, no redirect following. Bodies longer than `limit` bytes
/// must be reported as [`TransportError::TooLarge`].
pub trait Transport: Send + Sync {
    fn get(
        &self,
        url: &str,
        headers: &[(&str, &str)],
        limit: usize,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

/// Blocking HTTP via `ureq`.
#[derive(Debug, Default)]
pub struct HttpTransport;

fn is_timeout(e: &(dyn std::error::Error + 'static)) -> bool {
    let mut cur = Some(e);
    while let Some(err) = cur {
        if let Some(io) = err.downcast_ref::<io::Error>() {
            if matches!(io.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        cur = err.source();
    }
    e.to_string().contains("timed out")
}

fn read_capped(mut r: impl Read, limit: usize) -> Result<Vec<u8>, TransportError> {
    let mut body = Vec::new();
    r.by_ref()
        .take(limit as u64 + 1)
        .read_to_end(&mut body)
        .map_err(|e| {
            if is_timeout(&e) {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
    if body.len() > limit {
        return Err(TransportError::TooLarge);
    }
    Ok(body)
}

impl Transport for HttpTransport {
    fn get(
        &self,
        url: &str,
        headers: &[(&str, &str)],
        limit: usize,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).redirects(0).build();
        let mut req = agent.get(url);
        for (k, v) in headers {
            req = req.set(k, v);
        }
        let resp = match req.call() {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(ureq::Error::Transport(t)) => {
                return Err(if is_timeout(&t) {
                    TransportError::Timeout
                } else {
                    TransportError::Connect(t.to_string())
                });
            }
        };
        let status = resp.status();
        let location = resp.header("location").map(str::to_owned);
        let body = read_capped(resp.into_reader(), limit)?;
        Ok(HttpResponse {
            status,
            location,
            body,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub api_base: String,
    pub api_key_header: String,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before retry n is `backoff_base * 2^(n-1)`.
    pub backoff_base: Duration,
    pub size_limit: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            api_base: DEFAULT_API_BASE.to_owned(),
            api_key_header: DEFAULT_API_KEY_HEADER.to_owned(),
            timeout: DEFAULT_TIMEOUT,
            max_retries: MAX_RETRIES,
            backoff_base: Duration::from_millis(500),
            size_limit: DEFAULT_SIZE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    /// `api_key` is normally read from `CRYPTOHALAL_API_KEY`.
    Live { api_key: Option<String> },
    Fixture { dir: PathBuf },
}

impl Mode {
    pub fn live_from_env() -> Mode {
        Mode::Live {
            api_key: std::env::var(API_KEY_ENV).ok(),
        }
    }
}

pub struct MarketClient {
    mode: Mode,
    config: ClientConfig,
    transport: Arc<dyn Transport>,
}

/// Fixture file name for a query: trimmed, uppercased, and anything outside
/// `[A-Z0-9._-]` replaced by `_`.
pub fn normalize_query(q: &str) -> String {
    q.trim()
        .chars()
        .map(|c| {
            let c = c.to_ascii_uppercase();
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn url_digest(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

fn check_url(s: &str) -> Result<Url, MarketError> {
    match Url::parse(s) {
        Ok(u) if matches!(u.scheme(), "http" | "https") && u.has_host() => Ok(u),
        _ => Err(MarketError::InvalidUrl(s.to_owned())),
    }
}

fn read_fixture(path: &Path) -> Result<Option<Vec<u8>>, MarketError> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(MarketError::Fixture {
            path: path.to_owned(),
            source,
        }),
    }
}

fn fixture_time(path: &Path) -> DateTime<Utc> {
    fs::metadata(path)
        .and_then(|m| m.modified())
        .map(DateTime::<Utc>::from)
        .unwrap_or(DateTime::UNIX_EPOCH)
}

impl MarketClient {
    pub fn new(mode: Mode, config: ClientConfig) -> Self {
        Self::with_transport(mode, config, Arc::new(HttpTransport))
    }

    pub fn with_transport(mode: Mode, config: ClientConfig, transport: Arc<dyn Transport>) -> Self {
        MarketClient {
            mode,
            config,
            transport,
        }
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn resolve_metadata(&self, query: &str) -> Result<CoinMetadata, MarketError> {
        let q = query.trim();
        if q.is_empty() {
            return Err(MarketError::UnknownCoin(query.to_owned()));
        }
        match &self.mode {
            Mode::Fixture { dir } => {
                let path = dir.join("meta").join(format!("{}.json", normalize_query(q)));
                let body = read_fixture(&path)?.ok_or_else(|| MarketError::UnknownCoin(q.to_owned()))?;
                parse_metadata(&body, q, fixture_time(&path))
            }
            Mode::Live { api_key } => {
                let key = api_key
                    .as_deref()
                    .filter(|k| !k.trim().is_empty())
                    .ok_or(MarketError::MissingApiKey)?;
                let url = self.metadata_url(q)?;
                let headers = [
                    (self.config.api_key_header.as_str(), key),
                    ("Accept", "application/json"),
                ];
                let resp = self.get_with_retries(url.as_str(), &headers)?;
                match resp.status {
                    200..=299 => parse_metadata(&resp.body, q, Utc::now()),
                    // the reference provider answers 400 for unknown symbols
                    400 | 404 => Err(MarketError::UnknownCoin(q.to_owned())),
                    status => Err(MarketError::HttpStatus {
                        url: url.to_string(),
                        status,
                    }),
                }
            }
        }
    }

    fn metadata_url(&self, q: &str) -> Result<Url, MarketError> {
        let base = format!("{}/v2/cryptocurrency/info", self.config.api_base.trim_end_matches('/'));
        let mut url = check_url(&base)?;
        let looks_like_ticker = q.len() <= 12 && q.chars().all(|c| c.is_ascii_alphanumeric());
        if looks_like_ticker {
            url.query_pairs_mut().append_pair("symbol", &q.to_ascii_uppercase());
        } else {
            let slug: String = q
                .to_ascii_lowercase()
                .split(|c: char| !c.is_ascii_alphanumeric())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join("-");
            url.query_pairs_mut().append_pair("slug", &slug);
        }
        Ok(url)
    }

    fn get_with_retries(&self, url: &str, headers: &[(&str, &str)]) -> Result<HttpResponse, MarketError> {
        let mut attempt = 0;
        loop {
            let result = self
                .transport
                .get(url, headers, self.config.size_limit, self.config.timeout);
            let transient = match &result {
                Ok(r) => r.status >= 500 || r.status == 429,
                Err(TransportError::Timeout | TransportError::Connect(_)) => true,
                Err(TransportError::TooLarge) => false,
            };
            if !transient || attempt >= self.config.max_retries {
                return match result {
                    Ok(r) => Ok(r),
                    Err(TransportError::Timeout) => Err(MarketError::Timeout { url: url.to_owned() }),
                    Err(TransportError::Connect(message)) => Err(MarketError::Network {
                        url: url.to_owned(),
                        message,
                    }),
                    Err(TransportError::TooLarge) => Err(MarketError::TooLarge {
                        url: url.to_owned(),
                        limit: self.config.size_limit,
                    }),
                };
            }
            attempt += 1;
            let delay = self.config.backoff_base.saturating_mul(1 << (attempt - 1));
            log::debug!("retrying {url} in {delay:?} (attempt {attempt})");
            std::thread::sleep(delay);
        }
    }

    fn fixture_get(&self, dir: &Path, url: &str) -> Result<HttpResponse, MarketError> {
        let stem = dir.join("web").join(url_digest(url));
        if let Some(target) = read_fixture(&stem.with_extension("redirect"))? {
            return Ok(HttpResponse {
                status: 302,
                location: Some(String::from_utf8_lossy(&target).trim().to_owned()),
                body: Vec::new(),
            });
        }
        let status = match read_fixture(&stem.with_extension("status"))? {
            Some(s) => String::from_utf8_lossy(&s).trim().parse().map_err(|_| MarketError::Fixture {
                path: stem.with_extension("status"),
                source: io::Error::new(io::ErrorKind::InvalidData, "status file must hold a number"),
            })?,
            None => 200,
        };
        let body = read_fixture(&stem.with_extension("html"))?;
        match body {
            Some(b) if b.len() > self.config.size_limit => Err(MarketError::TooLarge {
                url: url.to_owned(),
                limit: self.config.size_limit,
            }),
            Some(body) => Ok(HttpResponse {
                status,
                location: None,
                body,
            }),
            None if status != 200 => Ok(HttpResponse {
                status,
                location: None,
                body: Vec::new(),
            }),
            None => Err(MarketError::Network {
                url: url.to_owned(),
                message: "no recorded page".to_owned(),
            }),
        }
    }

    /// GETs `url`, following up to five redirects.
    pub fn fetch_site(&self, url: &str) -> Result<RawDocument, MarketError> {
        let start = check_url(url)?;
        let mut current = start.clone();
        for _ in 0..=MAX_REDIRECTS {
            let resp = match &self.mode {
                Mode::Fixture { dir } => self.fixture_get(dir, current.as_str())?,
                Mode::Live { .. } => self.get_with_retries(current.as_str(), &[("Accept", "text/html,*/*")])?,
            };
            match resp.status {
                300..=399 => {
                    let loc = resp.location.ok_or_else(|| MarketError::HttpStatus {
                        url: current.to_string(),
                        status: resp.status,
                    })?;
                    current = current
                        .join(&loc)
                        .map_err(|_| MarketError::InvalidUrl(loc.clone()))
                        .and_then(|u| check_url(u.as_str()))?;
                }
                400.. => {
                    return Err(MarketError::HttpStatus {
                        url: current.to_string(),
                        status: resp.status,
                    })
                }
                _ => {
                    let mut doc = RawDocument::html(resp.body);
                    doc.source_url = Some(current.to_string());
                    return Ok(doc);
                }
            }
        }
        Err(MarketError::RedirectLoop { url: start.to_string() })
    }
}

#[derive(Deserialize)]
struct Entry {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    symbol: Option<String>,
    #[serde(default)]
    urls: Option<Urls>,
}

#[derive(Deserialize)]
struct Urls {
    #[serde(default)]
    website: Vec<String>,
}

/// Accepts `{"data": {KEY: entry}}` and `{"data": {KEY: [entry, ...]}}`;
/// KEY is matched case-insensitively against the query, falling back to the
/// first key. Only absolute http(s) website URLs are kept, in order.
pub fn parse_metadata(body: &[u8], query: &str, fetched_at: DateTime<Utc>) -> Result<CoinMetadata, MarketError> {
    let v: Value = serde_json::from_slice(body).map_err(|e| MarketError::MalformedResponse(e.to_string()))?;
    let data = v
        .get("data")
        .and_then(Value::as_object)
        .ok_or_else(|| MarketError::MalformedResponse("missing `data` object".into()))?;
    let slot = data
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(query.trim()))
        .or_else(|| data.iter().next())
        .map(|(_, v)| v)
        .ok_or_else(|| MarketError::UnknownCoin(query.to_owned()))?;
    let entry = match slot {
        Value::Array(items) => items.first().ok_or_else(|| MarketError::UnknownCoin(query.to_owned()))?,
        other => other,
    };
    let entry: Entry =
        serde_json::from_value(entry.clone()).map_err(|e| MarketError::MalformedResponse(e.to_string()))?;
    let website_urls: Vec<String> = entry
        .urls
        .map(|u| u.website)
        .unwrap_or_default()
        .into_iter()
        .filter(|u| check_url(u).is_ok())
        .collect();
    if website_urls.is_empty() {
        return Err(MarketError::MalformedResponse(format!("no website URL listed for `{query}`")));
    }
    let ticker = entry.symbol.unwrap_or_else(|| query.trim().to_ascii_uppercase());
    Ok(CoinMetadata {
        name: entry.name.unwrap_or_else(|| ticker.clone()),
        ticker,
        website_urls,
        fetched_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Fails the test if any live request is attempted.
    struct NetworkGuard;

    impl Transport for NetworkGuard {
        fn get(&self, url: &str, _: &[(&str, &str)], _: usize, _: Duration) -> Result<HttpResponse, TransportError> {
            panic!("network I/O attempted for {url}");
        }
    }

    /// Serves scripted responses in order and records requested URLs.
    struct Scripted {
        replies: Mutex<Vec<Result<HttpResponse, TransportError>>>,
        seen: Mutex<Vec<(String, Vec<(String, String)>)>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<HttpResponse, TransportError>>) -> Arc<Self> {
            replies.reverse();
            Arc::new(Scripted {
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl Transport for Scripted {
        fn get(&self, url: &str, h: &[(&str, &str)], _: usize, _: Duration) -> Result<HttpResponse, TransportError> {
            self.seen.lock().unwrap().push((
                url.to_owned(),
                h.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            ));
            self.replies.lock().unwrap().pop().expect("unexpected extra request")
        }
    }

    fn ok(status: u16, body: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status,
            location: None,
            body: body.as_bytes().to_vec(),
        })
    }

    fn quick() -> ClientConfig {
        ClientConfig {
            backoff_base: Duration::ZERO,
            ..ClientConfig::default()
        }
    }

    const BTC: &str = r#"{"status":{"error_code":0},"data":{"BTC":[{"id":1,"name":"Bitcoin","symbol":"BTC",
        "urls":{"website":["https://bitcoin.org/","https://bitcoin.com/"]}}]}}"#;

    fn fixture_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("meta")).unwrap();
        fs::create_dir_all(dir.path().join("web")).unwrap();
        fs::write(dir.path().join("meta/BTC.json"), BTC).unwrap();
        dir
    }

    fn fixture_client(dir: &Path) -> MarketClient {
        MarketClient::with_transport(
            Mode::Fixture { dir: dir.to_owned() },
            quick(),
            Arc::new(NetworkGuard),
        )
    }

    #[test]
    fn fixture_metadata_first_url_wins() {
        let dir = fixture_dir();
        let c = fixture_client(dir.path());
        let m = c.resolve_metadata("BTC").unwrap();
        assert_eq!(m.name, "Bitcoin");
        assert_eq!(m.website(), "https://bitcoin.org/");
        assert_eq!(m.website_urls.len(), 2);
        // case-insensitive fixture key
        assert_eq!(c.resolve_metadata(" btc ").unwrap().website_urls, m.website_urls);
        assert!(matches!(c.resolve_metadata("NOPE"), Err(MarketError::UnknownCoin(_))));
    }

    #[test]
    fn fixture_pages_and_redirects() {
        let dir = fixture_dir();
        let web = dir.path().join("web");
        let page = b"<html><body>Lending pools</body></html>";
        fs::write(web.join(format!("{}.html", url_digest("https://a.example/"))), page).unwrap();
        fs::write(
            web.join(format!("{}.redirect", url_digest("http://a.example/"))),
            "https://a.example/\n",
        )
        .unwrap();
        let c = fixture_client(dir.path());
        let doc = c.fetch_site("https://a.example/").unwrap();
        assert_eq!(doc.content, page);
        let doc = c.fetch_site("http://a.example/").unwrap();
        assert_eq!(doc.content, page);
        assert_eq!(doc.source_url.as_deref(), Some("https://a.example/"));

        // chain of six hops
        for i in 0..6 {
            fs::write(
                web.join(format!("{}.redirect", url_digest(&format!("https://r.example/{i}")))),
                format!("/{}", i + 1),
            )
            .unwrap();
        }
        fs::write(web.join(format!("{}.html", url_digest("https://r.example/6"))), "end").unwrap();
        assert!(matches!(c.fetch_site("https://r.example/0"), Err(MarketError::RedirectLoop { .. })));
        // five hops is allowed
        assert_eq!(c.fetch_site("https://r.example/1").unwrap().content, b"end");
    }

    #[test]
    fn fixture_size_cap_and_status() {
        let dir = fixture_dir();
        let web = dir.path().join("web");
        let big = "https://big.example/";
        fs::write(web.join(format!("{}.html", url_digest(big))), vec![b'a'; DEFAULT_SIZE_LIMIT + 1]).unwrap();
        let exact = "https://exact.example/";
        fs::write(web.join(format!("{}.html", url_digest(exact))), vec![b'a'; DEFAULT_SIZE_LIMIT]).unwrap();
        let gone = "https://gone.example/";
        fs::write(web.join(format!("{}.status", url_digest(gone))), "410").unwrap();
        let c = fixture_client(dir.path());
        assert!(matches!(c.fetch_site(big), Err(MarketError::TooLarge { .. })));
        assert_eq!(c.fetch_site(exact).unwrap().content.len(), DEFAULT_SIZE_LIMIT);
        assert!(matches!(c.fetch_site(gone), Err(MarketError::HttpStatus { status: 410, .. })));
        assert!(matches!(c.fetch_site("ftp://x/"), Err(MarketError::InvalidUrl(_))));
    }

    #[test]
    fn missing_key_fails_before_io() {
        for key in [None, Some(String::new()), Some("  ".into())] {
            let c = MarketClient::with_transport(Mode::Live { api_key: key }, quick(), Arc::new(NetworkGuard));
            assert!(matches!(c.resolve_metadata("BTC"), Err(MarketError::MissingApiKey)));
        }
    }

    #[test]
    fn live_metadata_request_shape() {
        let t = Scripted::new(vec![ok(200, BTC)]);
        let cfg = ClientConfig {
            api_base: "https://api.example/".into(),
            ..quick()
        };
        let c = MarketClient::with_transport(Mode::Live { api_key: Some("k1".into()) }, cfg, t.clone());
        let m = c.resolve_metadata("btc").unwrap();
        assert_eq!(m.ticker, "BTC");
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen[0].0, "https://api.example/v2/cryptocurrency/info?symbol=BTC");
        assert!(seen[0].1.contains(&(DEFAULT_API_KEY_HEADER.to_string(), "k1".to_string())));
    }

    #[test]
    fn retries_transient_failures_then_gives_up() {
        let t = Scripted::new(vec![Err(TransportError::Timeout), ok(503, ""), ok(200, BTC)]);
        let c = MarketClient::with_transport(Mode::Live { api_key: Some("k".into()) }, quick(), t.clone());
        assert!(c.resolve_metadata("BTC").is_ok());
        assert_eq!(t.seen.lock().unwrap().len(), 3);

        let t = Scripted::new(vec![
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
        ]);
        let c = MarketClient::with_transport(Mode::Live { api_key: Some("k".into()) }, quick(), t.clone());
        assert!(matches!(c.resolve_metadata("BTC"), Err(MarketError::Timeout { .. })));
        assert_eq!(t.seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn distinct_metadata_errors() {
        let live = |reply| {
            let cfg = ClientConfig {
                max_retries: 0,
                ..quick()
            };
            MarketClient::with_transport(Mode::Live { api_key: Some("k".into()) }, cfg, Scripted::new(vec![reply]))
        };
        assert!(matches!(live(ok(400, "{}")).resolve_metadata("ZZZ"), Err(MarketError::UnknownCoin(_))));
        assert!(matches!(live(ok(200, "not json")).resolve_metadata("ZZZ"), Err(MarketError::MalformedResponse(_))));
        assert!(matches!(live(ok(401, "")).resolve_metadata("ZZZ"), Err(MarketError::HttpStatus { status: 401, .. })));
        assert!(matches!(
            live(Err(TransportError::Connect("refused".into()))).resolve_metadata("ZZZ"),
            Err(MarketError::Network { .. })
        ));
    }

    #[test]
    fn name_queries_use_slug() {
        let t = Scripted::new(vec![ok(200, BTC)]);
        let c = MarketClient::with_transport(Mode::Live { api_key: Some("k".into()) }, quick(), t.clone());
        c.resolve_metadata("Wrapped Bitcoin").unwrap();
        assert!(t.seen.lock().unwrap()[0].0.ends_with("?slug=wrapped-bitcoin"));
    }

    #[test]
    fn parse_accepts_object_and_array_shapes() {
        let obj = br#"{"data":{"1":{"name":"X","symbol":"X","urls":{"website":["not a url","http://x.example"]}}}}"#;
        let m = parse_metadata(obj, "X", DateTime::UNIX_EPOCH).unwrap();
        assert_eq!(m.website_urls, vec!["http://x.example"]);
        let none = br#"{"data":{"X":[{"name":"X","urls":{"website":[]}}]}}"#;
        assert!(matches!(parse_metadata(none, "X", DateTime::UNIX_EPOCH), Err(MarketError::MalformedResponse(_))));
        assert!(matches!(
            parse_metadata(br#"{"data":{"X":[]}}"#, "X", DateTime::UNIX_EPOCH),
            Err(MarketError::UnknownCoin(_))
        ));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_query(" btc "), "BTC");
        assert_eq!(normalize_query("../etc/passwd"), ".._ETC_PASSWD");
    }
}
