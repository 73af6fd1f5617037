//! Text embedders: a remote client for the de facto `/embeddings` HTTP
//! contract and an offline feature-hashing embedder.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transport::{join_url, with_retries, Attempt, InFlight, RetryPolicy};
use crate::DEFAULT_DIM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("text {index} is empty")]
    EmptyText { index: usize },
    #[error("non-finite value in embedding")]
    NonFinite,
    #[error("invalid embedder profile: {0}")]
    InvalidProfile(String),
}

/// Fixed-length vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbedError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(values))
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        values.try_into()
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// True for the all-zero vector, e.g. the hash embedding of text with no words.
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

/// Returns `v / ||v||`, or `v` itself when it is the zero vector.
pub fn l2_normalize(v: &EmbeddingVector) -> EmbeddingVector {
    let norm = v.norm();
    if norm > 0.0 {
        EmbeddingVector(v.0.iter().map(|x| x / norm).collect())
    } else {
        v.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    Remote,
    LocalHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderProfile {
    pub kind: EmbedderKind,
    pub model_name: String,
    pub dim: usize,
    pub normalize: bool,
    pub batch_size: usize,
}

impl Default for EmbedderProfile {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::LocalHash,
            model_name: "all-MiniLM-L6-v2".to_string(),
            dim: DEFAULT_DIM,
            normalize: true,
            batch_size: 32,
        }
    }
}

impl EmbedderProfile {
    pub fn local_hash(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn remote(model_name: impl Into<String>, dim: usize) -> Self {
        Self {
            kind: EmbedderKind::Remote,
            model_name: model_name.into(),
            dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidProfile("dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(EmbedError::InvalidProfile(
                "batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Maps texts to vectors of a fixed dimension, index-aligned with the input.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_texts(&[text.to_string()])?;
        Ok(out.remove(0))
    }
}

fn check_texts(texts: &[String]) -> Result<(), EmbedError> {
    match texts.iter().position(|t| t.trim().is_empty()) {
        Some(index) => Err(EmbedError::EmptyText { index }),
        None => Ok(()),
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= u64::from(b' ');
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Signed feature-hashing accumulator over word unigrams and bigrams.
///
/// Each feature's FNV-1a 64 hash picks the slot (`hash % dim`) and the sign
/// (top bit set means `-1`).
pub fn hash_features(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "hash embedding dimension must be positive");
    let mut acc = vec![0.0f64; dim];
    let mut add = |h: u64| {
        let slot = (h % dim as u64) as usize;
        acc[slot] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    };
    let words = words(text);
    for w in &words {
        add(fnv1a64(&[w.as_bytes()]));
    }
    for pair in words.windows(2) {
        add(fnv1a64(&[pair[0].as_bytes(), pair[1].as_bytes()]));
    }
    acc
}

/// Deterministic L2-normalized feature-hashing embedding.
///
/// Text without any word maps to the zero vector (see [`EmbeddingVector::is_zero`]).
pub fn hash_embed(text: &str, dim: usize) -> EmbeddingVector {
    let v = EmbeddingVector(hash_features(text, dim));
    if v.is_zero() {
        tracing::debug!("hash embedding of featureless text is the zero vector");
    }
    l2_normalize(&v)
}

/// Offline lexical embedder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    normalize: bool,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "hash embedding dimension must be positive");
        Self {
            dim,
            normalize: true,
        }
    }

    pub fn from_profile(profile: &EmbedderProfile) -> Result<Self, EmbedError> {
        profile.validate()?;
        Ok(Self {
            dim: profile.dim,
            normalize: profile.normalize,
        })
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_texts(texts)?;
        Ok(texts
            .iter()
            .map(|t| {
                if self.normalize {
                    hash_embed(t, self.dim)
                } else {
                    EmbeddingVector(hash_features(t, self.dim))
                }
            })
            .collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

/// Client for `POST {base}/embeddings`.
pub struct RemoteEmbedder {
    profile: EmbedderProfile,
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    gate: InFlight,
    retry: RetryPolicy,
    timeout: Duration,
}

impl fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("profile", &self.profile)
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish_non_exhaustive()
    }
}

impl RemoteEmbedder {
    pub fn new(
        profile: EmbedderProfile,
        base_url: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, EmbedError> {
        profile.validate()?;
        Ok(Self {
            profile,
            base_url: base_url.into(),
            api_key: api_key.filter(|k| !k.is_empty()),
            client: reqwest::blocking::Client::new(),
            gate: InFlight::new(4),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(30),
        })
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.gate = InFlight::new(limit);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn attempt(&self, url: &str, body: &[u8]) -> Attempt<Vec<Vec<f64>>, EmbedError> {
        let unavailable = |m: String| EmbedError::EmbedderUnavailable(m);
        let mut req = self
            .client
            .post(url)
            .timeout(self.timeout)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(unavailable(e.to_string())),
        };
        let status = resp.status();
        if !status.is_success() {
            let err = unavailable(format!("HTTP {status}"));
            return if status.as_u16() == 429 || status.is_server_error() {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        match resp.json::<EmbeddingResponse>() {
            Ok(parsed) => {
                let mut data = parsed.data;
                data.sort_by_key(|d| d.index);
                Attempt::Done(data.into_iter().map(|d| d.embedding).collect())
            }
            Err(e) => Attempt::Retry(unavailable(format!("malformed response: {e}"))),
        }
    }

    fn embed_batch(&self, batch: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let url = join_url(&self.base_url, "embeddings");
        let body = serde_json::to_vec(&EmbeddingRequest {
            model: &self.profile.model_name,
            input: batch,
        })
        .map_err(|e| EmbedError::EmbedderUnavailable(e.to_string()))?;
        let rows = {
            let _permit = self.gate.acquire();
            with_retries(&self.retry, || self.attempt(&url, &body)).0?
        };
        if rows.len() != batch.len() {
            return Err(EmbedError::EmbedderUnavailable(format!(
                "expected {} embeddings, received {}",
                batch.len(),
                rows.len()
            )));
        }
        rows.into_iter()
            .map(|row| {
                if row.len() != self.profile.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.profile.dim,
                        got: row.len(),
                    });
                }
                let v = EmbeddingVector::new(row)?;
                Ok(if self.profile.normalize {
                    l2_normalize(&v)
                } else {
                    v
                })
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.profile.dim
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_texts(texts)?;
        let batches: Vec<&[String]> = texts.chunks(self.profile.batch_size).collect();
        if batches.len() <= 1 {
            return batches
                .first()
                .map_or(Ok(Vec::new()), |b| self.embed_batch(b));
        }
        let results: Vec<Result<Vec<EmbeddingVector>, EmbedError>> = std::thread::scope(|s| {
            let handles: Vec<_> = batches
                .iter()
                .map(|b| s.spawn(move || self.embed_batch(b)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}
