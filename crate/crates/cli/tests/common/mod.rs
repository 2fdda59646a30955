#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request};
use axum::Router;
use http_body_util::BodyExt;
use modguard::service::{router, AppState, ServiceConfig, DEFAULT_MAX_BODY_BYTES};
use modguard_core::embedding::{normalize, EmbeddingBackend, EmbeddingStore, MockBackend};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tower::ServiceExt;

/// Mock width used by every service fixture.
pub const SERVICE_DIM: usize = 256;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` orthonormal vectors of width `dim` (Gram-Schmidt on Gaussian draws).
pub fn orthonormal(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let g = Normal::new(0.0f64, 1.0).unwrap();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| g.sample(rng)).collect();
        for u in &out {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    out.into_iter().map(|v| v.into_iter().map(|a| a as f32).collect()).collect()
}

/// `n` unit-norm points: `center + N(0, sigma^2 I)`, renormalised.
pub fn cloud(center: &[f32], n: usize, sigma: f32, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let g = Normal::new(0.0f32, sigma).unwrap();
    let mut out = Vec::with_capacity(n * center.len());
    for _ in 0..n {
        let raw: Vec<f32> = center.iter().map(|&c| c + g.sample(rng)).collect();
        out.extend_from_slice(normalize(&raw).unwrap().as_slice());
    }
    out
}

/// Root-mean-square distance of rows to their mean.
pub fn rms_spread(rows: &[f32], dim: usize) -> f64 {
    let n = rows.len() / dim;
    let mut mean = vec![0f64; dim];
    for r in rows.chunks_exact(dim) {
        mean.iter_mut().zip(r).for_each(|(m, &x)| *m += x as f64 / n as f64);
    }
    let ss: f64 = rows
        .chunks_exact(dim)
        .map(|r| r.iter().zip(&mean).map(|(&x, m)| (x as f64 - m).powi(2)).sum::<f64>())
        .sum();
    (ss / n as f64).sqrt()
}

pub fn store(dim: usize, rows: Vec<f32>) -> EmbeddingStore {
    EmbeddingStore::from_rows(dim, rows).unwrap()
}

/// Texts for the service fixture model: a few seed sentences per class.
pub const HARMFUL_SEEDS: &[&str] = &[
    "i hate those stupid people and they should go away",
    "you are an ugly idiot and everyone despises you",
    "people like you are trash and should be beaten",
    "get out of our country you filthy animals",
];
pub const BENIGN_SEEDS: &[&str] = &[
    "what a nice day to walk the dog in the park",
    "my friend baked a lovely cake for the party",
    "the museum opens at noon on sundays",
    "thanks for the help with the garden yesterday",
];

pub fn mock() -> Arc<dyn EmbeddingBackend> {
    Arc::new(MockBackend::new(SERVICE_DIM))
}

pub fn service_state(model: PathBuf, backend: Arc<dyn EmbeddingBackend>) -> Arc<AppState> {
    let cfg = ServiceConfig { model_path: model, max_body_bytes: DEFAULT_MAX_BODY_BYTES, threshold_override: None, workers: 4 };
    AppState::new(&cfg, backend).unwrap()
}

pub fn app(state: Arc<AppState>) -> Router {
    router(state, DEFAULT_MAX_BODY_BYTES)
}

/// One recorded request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recorded {
    pub name: String,
    pub method: String,
    pub path: String,
    pub body: String,
}

/// The response recorded for a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub name: String,
    pub status: u16,
    pub body: String,
}

pub async fn send(app: &Router, method: &str, path: &str, body: impl Into<Body>) -> (u16, Vec<u8>) {
    let req = Request::builder()
        .method(Method::from_bytes(method.as_bytes()).unwrap())
        .uri(path)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn replay(app: &Router, r: &Recorded) -> Reply {
    let (status, body) = send(app, &r.method, &r.path, r.body.clone()).await;
    Reply { name: r.name.clone(), status, body: String::from_utf8(body).unwrap() }
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Vec<T> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &std::path::Path, rows: &[T]) {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).unwrap());
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}
