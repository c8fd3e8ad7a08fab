//! HTTP API over the classify pipeline and the ruling store.
//!
//! All bodies are UTF-8 JSON. Errors are `{"error": <message>, "code": <slug>}`.

pub mod config;

use std::future::Future;
use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, RawQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use cryptohalal_core::featurex::{Lexicon, LexiconError};
use cryptohalal_core::learners::{load_model, ModelIoError};
use cryptohalal_core::market::{ClientConfig, MarketClient, Mode};
use cryptohalal_core::pipeline::{Pipeline, PipelineError};
use cryptohalal_core::rulestore::{RuleStore, RulingDraft, StoreError, StoreOptions, SystemClock};
use cryptohalal_core::textprep::{Preprocessor, StopwordList, TextPrepError};
use cryptohalal_core::{Label, Provenance, RulingEntry, Ticker, TrainedModel};
use serde::{Deserialize, Serialize};

pub use config::{Config, ConfigError};

pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const MAX_PAGE_LIMIT: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("loading model {}: {source}", path.display())]
    Model { path: PathBuf, source: ModelIoError },
    #[error("loading lexicon: {0}")]
    Lexicon(#[from] LexiconError),
    #[error("loading stopwords: {0}")]
    Stopwords(#[from] TextPrepError),
    #[error("opening store: {0}")]
    Store(#[from] StoreError),
    #[error("offline mode needs paths.fixtures")]
    NoFixtures,
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server: {0}")]
    Serve(std::io::Error),
}

/// Immutable classification resources shared by every pipeline.
#[derive(Clone)]
pub struct Resources {
    pub model: Arc<TrainedModel>,
    pub lexicon: Arc<Lexicon>,
    pub preprocessor: Preprocessor,
    pub min_count: NonZeroUsize,
}

impl Resources {
    pub fn load(
        model: &Path,
        lexicon: Option<&Path>,
        stopwords: Option<&Path>,
        min_count: NonZeroUsize,
    ) -> Result<Self, StartupError> {
        let model = load_model(model).map_err(|source| StartupError::Model {
            path: model.to_owned(),
            source,
        })?;
        let lexicon = match lexicon {
            Some(p) => Lexicon::load(p)?,
            None => Lexicon::default(),
        };
        let stopwords = match stopwords {
            Some(p) => StopwordList::load(p)?,
            None => StopwordList::default(),
        };
        Ok(Resources {
            model: Arc::new(model),
            lexicon: Arc::new(lexicon),
            preprocessor: Preprocessor::new(stopwords),
            min_count,
        })
    }

    pub fn pipeline(&self, market: MarketClient, store: Arc<RuleStore>) -> Pipeline {
        Pipeline {
            model: self.model.clone(),
            lexicon: self.lexicon.clone(),
            preprocessor: self.preprocessor.clone(),
            min_count: self.min_count,
            market,
            store,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<RuleStore>,
    /// Absent when the service runs offline only.
    live: Option<Arc<Pipeline>>,
    /// Absent when no fixture directory is configured.
    offline: Option<Arc<Pipeline>>,
}

impl AppState {
    pub fn new(store: Arc<RuleStore>, live: Option<Pipeline>, offline: Option<Pipeline>) -> Self {
        AppState {
            store,
            live: live.map(Arc::new),
            offline: offline.map(Arc::new),
        }
    }

    /// Builds the state from a config. `force_offline` (or `market.offline`)
    /// routes every classification through the fixtures.
    pub fn from_config(config: &Config, force_offline: bool) -> Result<Self, StartupError> {
        let p = &config.paths;
        let min_count = NonZeroUsize::new(config.features.min_count).unwrap_or(NonZeroUsize::MIN);
        let res = Resources::load(&p.model, p.lexicon.as_deref(), p.stopwords.as_deref(), min_count)?;
        let opts = StoreOptions {
            hash_params: config.auth.argon2.unwrap_or_default(),
            token_ttl: chrono::Duration::milliseconds((config.auth.token_ttl_hours * 3_600_000.0) as i64),
            clock: Arc::new(SystemClock),
        };
        let store = Arc::new(RuleStore::open(&p.store, &p.accounts, opts)?);
        let client_config: ClientConfig = config.market.client_config();
        let offline_only = force_offline || config.market.offline;
        if offline_only && p.fixtures.is_none() {
            return Err(StartupError::NoFixtures);
        }
        let offline = p.fixtures.as_ref().map(|dir| {
            let market = MarketClient::new(Mode::Fixture { dir: dir.clone() }, client_config.clone());
            res.pipeline(market, store.clone())
        });
        let live = (!offline_only).then(|| res.pipeline(MarketClient::new(Mode::live_from_env(), client_config), store.clone()));
        Ok(AppState::new(store, live, offline))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    code: &'a str,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing, invalid or expired token")
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        log::error!("internal error: {e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            code: self.code,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidToken => ApiError::unauthorized(),
            StoreError::BadCredentials => Self::new(StatusCode::UNAUTHORIZED, "bad_credentials", "bad credentials"),
            StoreError::Malformed(m) => ApiError::bad_request(m),
            StoreError::ScholarDelete => ApiError::bad_request(e.to_string()),
            StoreError::NotFound { .. } => Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            StoreError::DuplicateAccount(_) => Self::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            StoreError::Io(_) | StoreError::Corrupt { .. } | StoreError::Config(_) => ApiError::internal(e),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::UnknownCoin(_) => Self::new(StatusCode::NOT_FOUND, "unknown_coin", e.to_string()),
            PipelineError::Upstream(_) => Self::new(StatusCode::BAD_GATEWAY, "upstream", e.to_string()),
            PipelineError::Content(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unusable_content", e.to_string()),
            PipelineError::Config(_) => {
                log::error!("classify misconfigured: {e}");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "config", "service is misconfigured for this request")
            }
            PipelineError::Store(e) => ApiError::internal(e),
        }
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn bearer(headers: &HeaderMap) -> Result<&str, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(ApiError::unauthorized)
}

fn query_pairs(raw: Option<&str>) -> Vec<(String, String)> {
    url::form_urlencoded::parse(raw.unwrap_or("").as_bytes()).into_owned().collect()
}

fn query_param<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Runs blocking store or pipeline work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

/// One row of the ruling list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulingSummary {
    pub ticker: Ticker,
    pub name: Option<String>,
    pub verdict: Label,
    pub verdict_text: String,
    pub provenance: Provenance,
    pub editor: String,
    pub updated_at: DateTime<Utc>,
    pub revision: u64,
}

impl From<&RulingEntry> for RulingSummary {
    fn from(e: &RulingEntry) -> Self {
        RulingSummary {
            ticker: e.ticker.clone(),
            name: e.name.clone(),
            verdict: e.verdict,
            verdict_text: e.verdict_text.clone(),
            provenance: e.provenance,
            editor: e.editor.clone(),
            updated_at: e.updated_at,
            revision: e.revision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulingPage {
    pub items: Vec<RulingSummary>,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    /// Offset of the next page; null on the last page.
    pub next_offset: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    query: String,
    #[serde(default)]
    offline: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginRequest {
    id: String,
    password: String,
}

async fn list_rulings(State(st): State<AppState>, RawQuery(raw): RawQuery) -> Result<Json<RulingPage>, ApiError> {
    let pairs = query_pairs(raw.as_deref());
    let number = |key: &str, default: usize| -> Result<usize, ApiError> {
        query_param(&pairs, key)
            .map(|v| v.parse::<usize>().map_err(|_| ApiError::bad_request(format!("{key} must be a non-negative integer"))))
            .unwrap_or(Ok(default))
    };
    let offset = number("offset", 0)?;
    let limit = number("limit", DEFAULT_PAGE_LIMIT)?;
    if !(1..=MAX_PAGE_LIMIT).contains(&limit) {
        return Err(ApiError::bad_request(format!("limit must be between 1 and {MAX_PAGE_LIMIT}")));
    }
    let snap = st.store.snapshot();
    let all = snap.list_all();
    let total = all.len();
    let items: Vec<RulingSummary> = all.into_iter().skip(offset).take(limit).map(RulingSummary::from).collect();
    let end = offset.saturating_add(items.len());
    Ok(Json(RulingPage {
        items,
        total,
        offset,
        limit,
        next_offset: (end < total).then_some(end),
    }))
}

async fn get_ruling(State(st): State<AppState>, UrlPath(query): UrlPath<String>) -> Result<Json<RulingEntry>, ApiError> {
    st.store
        .lookup(&query)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no ruling for `{}`", query.trim())))
}

async fn classify(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: ClassifyRequest = parse_body(&body)?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query must not be empty"));
    }
    let pipeline = if req.offline || st.live.is_none() {
        st.offline
            .clone()
            .ok_or_else(|| ApiError::bad_request("offline classification needs a fixture directory"))?
    } else {
        st.live.clone().expect("checked above")
    };
    let resp = blocking(move || pipeline.classify(&req.query).map_err(ApiError::from)).await?;
    Ok(Json(resp).into_response())
}

async fn login(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: LoginRequest = parse_body(&body)?;
    let session = blocking(move || st.store.login(&req.id, &req.password).map_err(ApiError::from)).await?;
    Ok(Json(session).into_response())
}

fn path_ticker(raw: &str) -> Result<Ticker, ApiError> {
    Ticker::normalize(raw).map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn put_ruling(
    State(st): State<AppState>,
    UrlPath(raw): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<RulingEntry>, ApiError> {
    let token = bearer(&headers)?.to_owned();
    st.store.authenticate(&token)?;
    let ticker = path_ticker(&raw)?;
    let draft: RulingDraft = parse_body(&body)?;
    let entry = blocking(move || st.store.upsert_scholar_ruling(&token, &ticker, draft).map_err(ApiError::from)).await?;
    Ok(Json(entry))
}

async fn delete_ruling(
    State(st): State<AppState>,
    UrlPath(raw): UrlPath<String>,
    RawQuery(q): RawQuery,
    headers: HeaderMap,
) -> Result<StatusCode, ApiError> {
    let token = bearer(&headers)?.to_owned();
    st.store.authenticate(&token)?;
    let ticker = path_ticker(&raw)?;
    let pairs = query_pairs(q.as_deref());
    let provenance = match query_param(&pairs, "provenance") {
        Some("machine") => Provenance::Machine,
        Some("scholar") => return Err(ApiError::bad_request("scholar entries cannot be deleted")),
        Some(other) => return Err(ApiError::bad_request(format!("unknown provenance `{other}`"))),
        None => return Err(ApiError::bad_request("provenance query parameter is required")),
    };
    blocking(move || st.store.delete_ruling(&token, &ticker, provenance).map_err(ApiError::from)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/rulings", get(list_rulings))
        .route("/api/rulings/{query}", get(get_ruling).put(put_ruling).delete(delete_ruling))
        .route("/api/classify", post(classify))
        .route("/api/auth/login", post(login))
        .fallback(not_found)
        .with_state(state)
}

/// A bound listener with its application state.
pub struct Server {
    listener: tokio::net::TcpListener,
    state: AppState,
}

impl Server {
    pub async fn bind(config: &Config, force_offline: bool) -> Result<Self, StartupError> {
        let state = AppState::from_config(config, force_offline)?;
        let addr = config.server.bind;
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| StartupError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Server { listener, state })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves, then compacts the store.
    pub async fn run<F>(self, shutdown: F) -> Result<(), StartupError>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        let store = self.state.store.clone();
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(StartupError::Serve)?;
        tokio::task::spawn_blocking(move || store.compact())
            .await
            .map_err(|e| StartupError::Serve(std::io::Error::other(e)))??;
        Ok(())
    }
}

pub async fn serve<F>(config: &Config, force_offline: bool, shutdown: F) -> Result<(), StartupError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let server = Server::bind(config, force_offline).await?;
    log::info!("listening on {}", server.local_addr().map_err(StartupError::Serve)?);
    server.run(shutdown).await
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
