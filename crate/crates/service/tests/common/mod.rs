#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use heapscope_core::query::QueryCache;
use heapscope_core::tracegen::{builtin_scenario, Scenario, SoupParams};
use heapscope_service::api::DEFAULT_OBJECT_LIMIT;
use heapscope_service::{ingest_trace_file, router, AppState, Registry};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn write_scenario(dir: &Path, scenario: &str, seed: u64) -> std::path::PathBuf {
    let path = dir.join(format!("{scenario}-{seed}.trc"));
    let trace = match scenario {
        "random-soup" => {
            Scenario::builtin(scenario, seed, SoupParams::default())
                .unwrap()
                .trace
        }
        _ => builtin_scenario(scenario, seed).unwrap(),
    };
    std::fs::write(&path, trace.to_bytes().unwrap()).unwrap();
    path
}

pub fn ingest_into(data_dir: &Path, scenario: &str, seed: u64, name: &str) {
    let trace = write_scenario(data_dir.parent().unwrap(), scenario, seed);
    ingest_trace_file(&trace, name, data_dir).unwrap();
}

pub fn app_with_limit(data_dir: &Path, object_limit: usize) -> Router {
    let state = AppState {
        registry: Arc::new(Registry::open(data_dir).unwrap()),
        cache: Arc::new(QueryCache::in_memory()),
        object_limit,
    };
    router(state, None)
}

pub fn app(data_dir: &Path) -> Router {
    app_with_limit(data_dir, DEFAULT_OBJECT_LIMIT)
}

/// A temp root with `data/` holding T0 ingested as "test".
pub fn t0_root() -> tempfile::TempDir {
    let root = tempfile::tempdir().unwrap();
    ingest_into(&root.path().join("data"), "t0-minimal", 0, "test");
    root
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let response = app
        .clone()
        .oneshot(Request::builder().uri(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}
