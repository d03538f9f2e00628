//! Read-only HTTP lookup service.
//!
//! `POST /query` takes `{"source_text": ..., "k"?: n, "threshold"?: x,
//! "sources"?: "tm-fms,mono-neuro" | [...]}` and answers with the same JSON
//! array `tmne query --json` prints. `GET /health` returns the manifest.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use clap::Args;
use serde::Deserialize;
use tmne_core::ranker::{parse_sources, proposals_json, Engine, QueryConfig, Source};
use tmne_core::Error;

use crate::config::Settings;
use crate::flags::{index_dir, ProviderFlags, QueryFlags, ScorerFlags};
use crate::index::open_index;

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    #[command(flatten)]
    query: QueryFlags,
    #[command(flatten)]
    provider: ProviderFlags,
    #[command(flatten)]
    scorer: ScorerFlags,
}

struct AppState {
    engine: Arc<Engine>,
    defaults: QueryConfig,
    manifest: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SourcesField {
    List(Vec<String>),
    Csv(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    source_text: String,
    k: Option<usize>,
    threshold: Option<f64>,
    sources: Option<SourcesField>,
}

fn reply(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn failure(status: StatusCode, message: &str) -> Response {
    reply(status, serde_json::json!({ "error": message }).to_string())
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::Provider(_) | Error::Protocol(_) | Error::Scorer(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::Io(_) | Error::Degenerate(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

fn request_config(req: &QueryRequest, defaults: &QueryConfig) -> Result<QueryConfig, Error> {
    if req.source_text.trim().is_empty() {
        return Err(Error::InvalidInput("source_text is empty".into()));
    }
    let mut cfg = defaults.clone();
    if let Some(k) = req.k {
        cfg.k_fms = k;
        cfg.k_neuro = k;
    }
    if let Some(t) = req.threshold {
        cfg.neuro_min_estimated = t;
    }
    match &req.sources {
        None => {}
        Some(SourcesField::Csv(s)) => cfg.sources = parse_sources(s)?,
        Some(SourcesField::List(items)) => {
            cfg.sources = items
                .iter()
                .map(|s| s.parse::<Source>())
                .collect::<Result<_, _>>()?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

async fn query(State(state): State<Arc<AppState>>, body: String) -> Response {
    let req: QueryRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return failure(StatusCode::BAD_REQUEST, &format!("bad request body: {e}")),
    };
    let cfg = match request_config(&req, &state.defaults) {
        Ok(c) => c,
        Err(e) => return failure(StatusCode::BAD_REQUEST, &e.to_string()),
    };
    let engine = Arc::clone(&state.engine);
    let result = tokio::task::spawn_blocking(move || engine.query(&req.source_text, &cfg)).await;
    match result {
        Ok(Ok(proposals)) => reply(StatusCode::OK, proposals_json(&proposals) + "\n"),
        Ok(Err(e)) => failure(status_of(&e), &e.to_string()),
        Err(e) => failure(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    reply(StatusCode::OK, state.manifest.clone())
}

pub fn run(args: ServeArgs, config: Settings) -> anyhow::Result<()> {
    let mut flags = Settings::default();
    args.query.apply(&mut flags);
    args.provider.apply(&mut flags);
    args.scorer.apply(&mut flags);
    let dir = index_dir(args.index.clone(), &config)?;
    let loaded = open_index(&dir, config, flags)?;
    let defaults = loaded.settings.query()?;
    loaded.engine.scorer()?;
    let state = Arc::new(AppState {
        engine: loaded.engine,
        defaults,
        manifest: loaded.manifest.to_json(),
    });
    let app = Router::new()
        .route("/query", post(query))
        .route("/health", get(health))
        .with_state(state);

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .map_err(|e| Error::Config(format!("cannot bind {}: {e}", args.addr)))?;
        println!("listening on {}", listener.local_addr()?);
        std::io::stdout().flush()?;
        axum::serve(listener, app).await?;
        Ok(())
    })
}
