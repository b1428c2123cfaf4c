//! Generative-model backends behind every text-producing stage.
//!
//! Each [`Stage`] has a typed payload (what the stage conditions on) and a
//! typed response, both in [`schema`]. [`Generator::generate`] validates
//! backend output against the stage contract, retries a bounded number of
//! times, and persists validated responses in a content-addressed
//! [`ResponseCache`] so that repositories stay a pure function of the seed
//! even with nondeterministic backends.

mod cache;
mod http;
pub mod prompts;
pub mod schema;
mod stub;

use std::fmt;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use http::{HttpBackend, HttpBackendConfig};
pub use stub::StubBackend;

use crate::seedstream::SeedContext;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Titles,
    Description,
    Abstract,
    PathStep,
    PathValues,
    FileVariables,
    DistParams,
    DependentExpr,
    Paraphrase,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Titles => "TITLES",
            Stage::Description => "DESCRIPTION",
            Stage::Abstract => "ABSTRACT",
            Stage::PathStep => "PATH_STEP",
            Stage::PathValues => "PATH_VALUES",
            Stage::FileVariables => "FILE_VARIABLES",
            Stage::DistParams => "DIST_PARAMS",
            Stage::DependentExpr => "DEPENDENT_EXPR",
            Stage::Paraphrase => "PARAPHRASE",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub stage: Stage,
    pub context_payload: Json,
    /// Identifier of the response contract, e.g. `titles/v1`.
    pub schema: String,
    pub seed_tag: SeedContext,
}

impl GenerationRequest {
    pub fn new<P: Serialize>(stage: Stage, payload: &P, seed_tag: SeedContext) -> Self {
        Self {
            stage,
            context_payload: serde_json::to_value(payload).expect("payloads serialize"),
            schema: schema::schema_id(stage).to_string(),
            seed_tag,
        }
    }

    /// Typed view of the payload.
    pub fn payload<P: DeserializeOwned>(&self) -> Result<P, String> {
        serde_json::from_value(self.context_payload.clone())
            .map_err(|e| format!("{} payload does not match its contract: {e}", self.stage))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    /// Number of candidate titles requested.
    pub k: usize,
    /// Number of path placeholders.
    pub n_path: usize,
    pub model_id: String,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.k < 2 {
            return Err(format!("k must be at least 2, got {}", self.k));
        }
        if self.n_path < 1 {
            return Err("n_path must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub model_id: String,
    pub stage: Stage,
    /// Hex SHA-256 of the canonical request JSON.
    pub digest: String,
}

impl CacheKey {
    pub fn for_request(model_id: &str, request: &GenerationRequest) -> Self {
        // serde_json maps are sorted, so this serialization is canonical.
        let canonical = serde_json::to_vec(&serde_json::json!({
            "model_id": model_id,
            "stage": request.stage,
            "schema": request.schema,
            "seed_tag": request.seed_tag,
            "context_payload": request.context_payload,
        }))
        .expect("requests serialize");
        let digest = Sha256::digest(&canonical);
        Self {
            model_id: model_id.to_string(),
            stage: request.stage,
            digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// The backend answered but the answer is not a JSON document.
    #[error("malformed backend output: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("{stage} response failed validation after {attempts} attempts: {last_error}")]
    SchemaViolation {
        stage: Stage,
        attempts: u32,
        last_error: String,
    },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("generation cache error: {0}")]
    Cache(String),
}

/// A text-generation backend. `attempt` counts from 0; `feedback` carries the
/// validation error of the previous attempt.
pub trait Backend: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, request: &GenerationRequest, attempt: u32, feedback: Option<&str>) -> Result<Json, BackendError>;
}

/// Backend + cache + validation loop.
#[derive(Clone)]
pub struct Generator {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    max_attempts: u32,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("model_id", &self.backend.model_id())
            .field("cache", &self.cache)
            .field("max_attempts", &self.max_attempts)
            .finish()
    }
}

impl Generator {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            cache: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    /// Deterministic stub backend with no cache.
    pub fn stub() -> Self {
        Self::new(Arc::new(StubBackend::new()))
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_max_attempts(mut self, attempts: u32) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Validated response for `request`, from the cache when present.
    pub fn generate(&self, request: &GenerationRequest, params: &GenerationParams) -> Result<Json, GenError> {
        params.validate().map_err(GenError::InvalidRequest)?;
        let model_id = if params.model_id.is_empty() {
            self.backend.model_id()
        } else {
            params.model_id.as_str()
        };
        let key = CacheKey::for_request(model_id, request);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key).map_err(GenError::Cache)? {
                if schema::validate(request, &hit).is_ok() {
                    return Ok(hit);
                }
            }
        }
        let mut feedback: Option<String> = None;
        for attempt in 0..self.max_attempts {
            let response = match self.backend.complete(request, attempt, feedback.as_deref()) {
                Ok(r) => r,
                Err(BackendError::Unavailable(msg)) => return Err(GenError::BackendUnavailable(msg)),
                Err(BackendError::Malformed(msg)) => {
                    feedback = Some(msg);
                    continue;
                }
            };
            match schema::validate(request, &response) {
                Ok(()) => {
                    if let Some(cache) = &self.cache {
                        cache.put(&key, &response).map_err(GenError::Cache)?;
                    }
                    return Ok(response);
                }
                Err(problem) => feedback = Some(problem),
            }
        }
        Err(GenError::SchemaViolation {
            stage: request.stage,
            attempts: self.max_attempts,
            last_error: feedback.unwrap_or_default(),
        })
    }

    pub fn generate_typed<T: DeserializeOwned>(
        &self,
        request: &GenerationRequest,
        params: &GenerationParams,
    ) -> Result<T, GenError> {
        let raw = self.generate(request, params)?;
        serde_json::from_value(raw).map_err(|e| GenError::SchemaViolation {
            stage: request.stage,
            attempts: 1,
            last_error: e.to_string(),
        })
    }
}
