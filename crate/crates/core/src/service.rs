//! Read-only JSON API over a swappable serving snapshot.
//!
//! | route                      | parameters                                         |
//! |----------------------------|----------------------------------------------------|
//! | `GET /api/search`          | `q`, `k`, `alpha`, `genre`, `emotion`, `year_from`, `year_to` |
//! | `GET /api/songs/{id}`      |                                                    |
//! | `GET /api/recommend`       | `seed`, `k`, `lambda`, `artist_cap`                |
//! | `GET /api/recommend/facet` | `genre` or `emotion`, `k`, `artist_cap`            |
//! | `GET /api/stats`           |                                                    |
//! | `GET /api/health`          |                                                    |
//!
//! Errors are `{"error": {"code", "message"}}` with `code` one of
//! `empty_query`, `not_found`, `bad_parameter`, `stale_index`, `internal`.
//! Out-of-range `k`, `alpha` and `lambda` are clamped and reported in a
//! `warnings` array instead of rejected. Response schemas live in `schemas/`.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use arc_swap::ArcSwap;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::analytics::{compute_stats_with, StatsPayload};
use crate::corpus::{Emotion, Genre, SongId, SongRecord};
use crate::engine::{Engine, EngineError, Fingerprints, LoadOptions};
use crate::recommend::{self, Facet, RecOptions, Recommendation, RecommendError};
use crate::search::{Filters, QueryOptions, ResultPage, SearchError};
use crate::textprep::PipelineConfig;

pub const MAX_K: usize = 100;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingDefaults {
    pub k: usize,
    pub alpha: f64,
    pub snippet_lines: usize,
}

impl Default for RankingDefaults {
    fn default() -> Self {
        let q = QueryOptions::default();
        RankingDefaults {
            k: q.k,
            alpha: q.alpha,
            snippet_lines: q.snippet_lines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendDefaults {
    pub k: usize,
    pub lambda: f64,
    pub artist_cap: usize,
}

impl Default for RecommendDefaults {
    fn default() -> Self {
        RecommendDefaults {
            k: 10,
            lambda: recommend::DEFAULT_LAMBDA,
            artist_cap: recommend::DEFAULT_ARTIST_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub corpus_dir: PathBuf,
    pub index_dir: PathBuf,
    /// Serving pipeline; must match the one the index was built with.
    #[serde(default)]
    pub pipeline: Option<PathBuf>,
    #[serde(default)]
    pub ranking: RankingDefaults,
    #[serde(default)]
    pub recommend: RecommendDefaults,
    #[serde(default)]
    pub cors_allowlist: Vec<String>,
    /// One JSON line per request on stderr.
    #[serde(default = "default_true")]
    pub request_log: bool,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_true() -> bool {
    true
}

impl ServiceConfig {
    pub fn new(corpus_dir: impl Into<PathBuf>, index_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            listen: default_listen(),
            corpus_dir: corpus_dir.into(),
            index_dir: index_dir.into(),
            pipeline: None,
            ranking: RankingDefaults::default(),
            recommend: RecommendDefaults::default(),
            cors_allowlist: Vec::new(),
            request_log: true,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a TOML file; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            rebase(&mut config.corpus_dir);
            rebase(&mut config.index_dir);
            if let Some(p) = config.pipeline.as_mut() {
                rebase(p);
            }
        }
        Ok(config)
    }

    /// `LYRICS_LISTEN`, `LYRICS_CORPUS_DIR` and `LYRICS_INDEX_DIR` win over the file.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(v) = var("LYRICS_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = var("LYRICS_CORPUS_DIR") {
            self.corpus_dir = v.into();
        }
        if let Some(v) = var("LYRICS_INDEX_DIR") {
            self.index_dir = v.into();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.listen.parse::<SocketAddr>().is_err() {
            return invalid(format!("listen address {:?} is not host:port", self.listen));
        }
        for (name, dir) in [("corpus_dir", &self.corpus_dir), ("index_dir", &self.index_dir)] {
            if !dir.is_dir() {
                return invalid(format!("{name} {} does not exist", dir.display()));
            }
        }
        if let Some(p) = &self.pipeline {
            if !p.is_file() {
                return invalid(format!("pipeline {} does not exist", p.display()));
            }
        }
        let r = &self.ranking;
        if r.k == 0 || r.k > MAX_K || !(0.0..=1.0).contains(&r.alpha) {
            return invalid("ranking defaults need 1 <= k <= 100 and alpha in [0, 1]".into());
        }
        let r = &self.recommend;
        if r.k == 0 || r.k > MAX_K || r.artist_cap == 0 || !(0.0..=1.0).contains(&r.lambda) {
            return invalid("recommend defaults need 1 <= k <= 100, artist_cap >= 1, lambda in [0, 1]".into());
        }
        for origin in &self.cors_allowlist {
            if HeaderValue::from_str(origin).is_err() {
                return invalid(format!("bad CORS origin {origin:?}"));
            }
        }
        Ok(())
    }

    fn load_options(&self) -> Result<LoadOptions, EngineError> {
        let pipeline = match &self.pipeline {
            Some(p) => Some(PipelineConfig::from_file(p)?),
            None => None,
        };
        Ok(LoadOptions {
            corpus_dir: Some(self.corpus_dir.clone()),
            pipeline,
        })
    }
}

/// Everything a request reads, replaced as a unit on reload.
#[derive(Debug)]
pub struct Snapshot {
    pub engine: Engine,
    pub stats: StatsPayload,
}

impl Snapshot {
    pub fn new(engine: Engine) -> Self {
        let stats = StatsPayload::new(compute_stats_with(engine.corpus(), engine.pipeline()));
        Snapshot { engine, stats }
    }
}

struct AppState {
    snapshot: ArcSwap<Snapshot>,
    config: ServiceConfig,
}

#[derive(Clone)]
pub struct Service {
    state: Arc<AppState>,
}

impl Service {
    /// Loads artifacts named by `config`; refuses stale or inconsistent ones.
    pub fn start(config: ServiceConfig) -> Result<Self, EngineError> {
        let engine = Engine::load(&config.index_dir, &config.load_options()?)?;
        Ok(Self::with_engine(engine, config))
    }

    pub fn with_engine(engine: Engine, config: ServiceConfig) -> Self {
        Service {
            state: Arc::new(AppState {
                snapshot: ArcSwap::from_pointee(Snapshot::new(engine)),
                config,
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.state.config
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.state.snapshot.load_full()
    }

    /// Reloads from the configured directories. On failure the current
    /// snapshot stays active.
    pub fn reload(&self) -> Result<Fingerprints, EngineError> {
        let config = &self.state.config;
        let engine = Engine::load(&config.index_dir, &config.load_options()?)?;
        Ok(self.replace(engine))
    }

    /// Installs an already-built engine.
    pub fn replace(&self, engine: Engine) -> Fingerprints {
        let fingerprints = engine.fingerprints();
        self.state.snapshot.store(Arc::new(Snapshot::new(engine)));
        fingerprints
    }

    pub fn router(&self) -> Router {
        let mut router = Router::new()
            .route("/api/search", get(search))
            .route("/api/songs/{id}", get(song))
            .route("/api/recommend", get(recommend_similar))
            .route("/api/recommend/facet", get(recommend_facet))
            .route("/api/stats", get(stats))
            .route("/api/health", get(health))
            .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
            .with_state(self.state.clone());
        let origins: Vec<HeaderValue> = self
            .state
            .config
            .cors_allowlist
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        if !origins.is_empty() {
            router = router.layer(
                CorsLayer::new()
                    .allow_origin(AllowOrigin::list(origins))
                    .allow_methods([Method::GET]),
            );
        }
        if self.state.config.request_log {
            router = router.layer(middleware::from_fn(log_request));
        }
        router
    }
}

/// Binds, serves until Ctrl-C, and reloads on SIGHUP.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    config.validate()?;
    let listen = config.listen.clone();
    let service = tokio::task::spawn_blocking(move || Service::start(config)).await??;
    let listener = tokio::net::TcpListener::bind(&listen).await?;
    eprintln!(
        "{}",
        json!({"event": "listening", "addr": listener.local_addr()?.to_string(),
               "fingerprints": service.snapshot().engine.fingerprints()})
    );
    #[cfg(unix)]
    {
        let reloader = service.clone();
        tokio::spawn(async move {
            use tokio::signal::unix::{signal, SignalKind};
            let Ok(mut hangups) = signal(SignalKind::hangup()) else {
                return;
            };
            while hangups.recv().await.is_some() {
                let svc = reloader.clone();
                let outcome = tokio::task::spawn_blocking(move || svc.reload()).await;
                let line = match outcome {
                    Ok(Ok(fp)) => json!({"event": "reload", "ok": true, "fingerprints": fp}),
                    Ok(Err(e)) => json!({"event": "reload", "ok": false, "error": e.to_string()}),
                    Err(e) => json!({"event": "reload", "ok": false, "error": e.to_string()}),
                };
                eprintln!("{line}");
            }
        });
    }
    axum::serve(listener, service.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn log_request(request: Request, next: Next) -> Response {
    let started = Instant::now();
    let path = request.uri().path().to_string();
    let params = request.uri().query().unwrap_or("").to_string();
    let response = next.run(request).await;
    eprintln!(
        "{}",
        json!({
            "path": path,
            "params": params,
            "status": response.status().as_u16(),
            "elapsed_ms": started.elapsed().as_secs_f64() * 1000.0,
        })
    );
    response
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    EmptyQuery,
    NotFound,
    BadParameter,
    StaleIndex,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::EmptyQuery | ErrorCode::BadParameter => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::StaleIndex => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    code: ErrorCode,
    message: String,
}

impl ApiError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
        }
    }

    fn bad(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadParameter, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.code.status(), Json(body)).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::EmptyQuery => ApiError::new(ErrorCode::EmptyQuery, e.to_string()),
            SearchError::BadParameter(_) => ApiError::bad(e.to_string()),
        }
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::NotFound(_) => ApiError::new(ErrorCode::NotFound, e.to_string()),
            RecommendError::UnknownFacet(_) | RecommendError::BadParameter(_) => ApiError::bad(e.to_string()),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad(e.body_text())
    }
}

type Params = Result<Query<Vec<(String, String)>>, QueryRejection>;

/// Last value wins; blank values count as absent except where noted.
struct ParamMap(BTreeMap<String, String>);

impl ParamMap {
    fn from(params: Params) -> Result<Self, ApiError> {
        let Query(pairs) = params?;
        Ok(ParamMap(pairs.into_iter().collect()))
    }

    fn raw(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.raw(name).map(str::trim).filter(|v| !v.is_empty())
    }

    fn parse<T: FromStr>(&self, name: &str) -> Result<Option<T>, ApiError> {
        self.get(name)
            .map(|v| v.parse().map_err(|_| ApiError::bad(format!("{name}={v:?} is not valid"))))
            .transpose()
    }

    fn fraction(&self, name: &str, default: f64, warnings: &mut Vec<String>) -> Result<f64, ApiError> {
        let value = self.parse::<f64>(name)?.unwrap_or(default);
        if !value.is_finite() {
            return Err(ApiError::bad(format!("{name} must be a finite number")));
        }
        let clamped = value.clamp(0.0, 1.0);
        if clamped != value {
            warnings.push(format!("{name} {value} clamped to {clamped}"));
        }
        Ok(clamped)
    }

    fn count(&self, name: &str, default: usize, warnings: &mut Vec<String>) -> Result<usize, ApiError> {
        let value = self.parse::<i64>(name)?.unwrap_or(default as i64);
        let clamped = value.clamp(1, MAX_K as i64);
        if clamped != value {
            warnings.push(format!("{name} {value} clamped to {clamped}"));
        }
        Ok(clamped as usize)
    }
}

#[derive(Serialize)]
struct SearchResponse {
    #[serde(flatten)]
    page: ResultPage,
    warnings: Vec<String>,
}

async fn search(State(state): State<Arc<AppState>>, params: Params) -> Result<Json<SearchResponse>, ApiError> {
    let params = ParamMap::from(params)?;
    let defaults = &state.config.ranking;
    let mut warnings = Vec::new();
    let options = QueryOptions {
        k: params.count("k", defaults.k, &mut warnings)?,
        alpha: params.fraction("alpha", defaults.alpha, &mut warnings)?,
        filters: Filters {
            genre: params.get("genre").map(Genre::parse),
            emotion: params.get("emotion").map(Emotion::parse),
            year_from: params.parse("year_from")?,
            year_to: params.parse("year_to")?,
        },
        snippet_lines: defaults.snippet_lines,
    };
    let q = params.raw("q").unwrap_or("");
    let snapshot = state.snapshot.load_full();
    let page = snapshot.engine.search(q, options)?;
    Ok(Json(SearchResponse { page, warnings }))
}

async fn song(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SongRecord>, ApiError> {
    let id: SongId = id
        .parse()
        .map_err(|_| ApiError::bad(format!("song id {id:?} is not an unsigned integer")))?;
    let snapshot = state.snapshot.load_full();
    snapshot
        .engine
        .record(id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("song {id} is not in the corpus")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecommendedSong {
    pub doc_id: SongId,
    pub title: String,
    pub artist: String,
    pub year: Option<i32>,
    pub genre: Genre,
    pub emotion: Emotion,
    pub score: f64,
    pub similarity: f64,
}

#[derive(Serialize)]
struct RecommendResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<SongId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    facet: Option<Facet>,
    recommendations: Vec<RecommendedSong>,
    artist_share: BTreeMap<String, f64>,
    warnings: Vec<String>,
}

fn describe(engine: &Engine, recs: Vec<Recommendation>) -> (Vec<RecommendedSong>, BTreeMap<String, f64>) {
    let songs: Vec<RecommendedSong> = recs
        .into_iter()
        .filter_map(|r| {
            let record = engine.record(r.doc_id)?;
            Some(RecommendedSong {
                doc_id: r.doc_id,
                title: record.title.clone(),
                artist: record.artist.clone(),
                year: record.year,
                genre: record.genre.clone(),
                emotion: record.emotion.clone(),
                score: r.score,
                similarity: r.similarity,
            })
        })
        .collect();
    let share = recommend::artist_share(songs.iter().map(|s| s.artist.as_str()));
    (songs, share)
}

fn artist_cap(params: &ParamMap, default: usize) -> Result<usize, ApiError> {
    let cap = params.parse::<usize>("artist_cap")?.unwrap_or(default);
    if cap == 0 {
        return Err(ApiError::bad("artist_cap must be at least 1"));
    }
    Ok(cap)
}

async fn recommend_similar(State(state): State<Arc<AppState>>, params: Params) -> Result<Json<RecommendResponse>, ApiError> {
    let params = ParamMap::from(params)?;
    let defaults = &state.config.recommend;
    let mut warnings = Vec::new();
    let seed: SongId = params
        .parse("seed")?
        .ok_or_else(|| ApiError::bad("seed is required"))?;
    let opts = RecOptions {
        k: params.count("k", defaults.k, &mut warnings)?,
        lambda: params.fraction("lambda", defaults.lambda, &mut warnings)?,
        artist_cap: Some(artist_cap(&params, defaults.artist_cap)?),
        facet_filter: None,
    };
    let snapshot = state.snapshot.load_full();
    let recs = recommend::recommend_similar(&snapshot.engine, seed, &opts)?;
    let (recommendations, artist_share) = describe(&snapshot.engine, recs);
    Ok(Json(RecommendResponse {
        seed: Some(seed),
        facet: None,
        recommendations,
        artist_share,
        warnings,
    }))
}

async fn recommend_facet(State(state): State<Arc<AppState>>, params: Params) -> Result<Json<RecommendResponse>, ApiError> {
    let params = ParamMap::from(params)?;
    let defaults = &state.config.recommend;
    let mut warnings = Vec::new();
    let facet = match (params.get("genre"), params.get("emotion")) {
        (Some(g), None) => Facet::Genre(Genre::parse(g)),
        (None, Some(e)) => Facet::Emotion(Emotion::parse(e)),
        _ => return Err(ApiError::bad("give exactly one of genre or emotion")),
    };
    let k = params.count("k", defaults.k, &mut warnings)?;
    let cap = artist_cap(&params, defaults.artist_cap)?;
    let snapshot = state.snapshot.load_full();
    let recs = recommend::recommend_by_facet(&snapshot.engine, &facet, k, Some(cap))?;
    let (recommendations, artist_share) = describe(&snapshot.engine, recs);
    Ok(Json(RecommendResponse {
        seed: None,
        facet: Some(facet),
        recommendations,
        artist_share,
        warnings,
    }))
}

async fn stats(State(state): State<Arc<AppState>>) -> Response {
    let snapshot = state.snapshot.load_full();
    Json(&snapshot.stats).into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let snapshot = state.snapshot.load_full();
    let engine = &snapshot.engine;
    Json(json!({
        "status": "ok",
        "songs": engine.corpus().len(),
        "encoder": engine.encoder().name(),
        "fingerprints": engine.fingerprints(),
    }))
}

/// Maps a startup or reload failure to the API error taxonomy.
pub fn error_code(e: &EngineError) -> ErrorCode {
    if e.is_stale() {
        ErrorCode::StaleIndex
    } else {
        ErrorCode::Internal
    }
}
