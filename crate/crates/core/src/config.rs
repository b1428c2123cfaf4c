//! Run configuration: a TOML file plus `REPOSIM_*` environment overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalharness::{HttpAgentConfig, Limits, VariantSelection};
use crate::genmodel::{Generator, HttpBackend, HttpBackendConfig, ResponseCache};
use crate::qaengine::BatchConfig;
use crate::repospec::BuildParams;
use crate::taxonomy::{Taxonomy, TaxonomyError};
use crate::toolserver::ToolService;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is invalid: {message}")]
    Parse { path: String, message: String },
    #[error("environment variable {var}: {message}")]
    Env { var: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("taxonomy {path}: {source}")]
    Taxonomy {
        path: String,
        #[source]
        source: TaxonomyError,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Stub,
    Http(HttpBackendConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub limits: Limits,
    pub parallelism: usize,
    pub variants: VariantSelection,
    /// Chat-completions endpoint of the agent under test.
    pub agent: Option<HttpAgentConfig>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            limits: Limits::default(),
            parallelism: 4,
            variants: VariantSelection::TemplatedOnly,
            agent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 7420,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Taxonomy JSON; the bundled one when unset.
    pub taxonomy: Option<PathBuf>,
    /// Directory of cached generation responses.
    pub cache_dir: Option<PathBuf>,
    pub build: BuildParams,
    pub backend: BackendConfig,
    /// Backends used for paraphrasing, one paraphrase per backend.
    pub paraphrasers: Vec<HttpBackendConfig>,
    pub questions: BatchConfig,
    pub harness: HarnessConfig,
    pub server: ServerConfig,
}

fn parse_env<T: std::str::FromStr>(var: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ConfigError::Env {
        var: var.to_string(),
        message: e.to_string(),
    })
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Defaults when `path` is `None`, then environment overrides, then
    /// validation.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::parse(&text, &p.display().to_string())?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `REPOSIM_*` overrides read through `get`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("REPOSIM_TAXONOMY") {
            self.taxonomy = Some(v.into());
        }
        if let Some(v) = get("REPOSIM_CACHE_DIR") {
            self.cache_dir = Some(v.into());
        }
        if let Some(v) = get("REPOSIM_PARALLELISM") {
            self.harness.parallelism = parse_env("REPOSIM_PARALLELISM", &v)?;
        }
        if let Some(v) = get("REPOSIM_PORT") {
            self.server.port = parse_env("REPOSIM_PORT", &v)?;
        }
        if let Some(v) = get("REPOSIM_PER_REPO") {
            self.questions.per_repo = parse_env("REPOSIM_PER_REPO", &v)?;
        }
        if let Some(url) = get("REPOSIM_BACKEND_URL") {
            let model = get("REPOSIM_BACKEND_MODEL").unwrap_or_default();
            self.backend = BackendConfig::Http(HttpBackendConfig {
                base_url: url,
                model,
                api_key_env: get("REPOSIM_BACKEND_KEY_ENV"),
                timeout_secs: 120,
            });
        }
        if let Some(url) = get("REPOSIM_AGENT_URL") {
            let agent = self.harness.agent.get_or_insert_with(|| HttpAgentConfig {
                base_url: String::new(),
                model: String::new(),
                api_key_env: None,
                temperature: 0.0,
                timeout_secs: 120,
            });
            agent.base_url = url;
        }
        if let Some(model) = get("REPOSIM_AGENT_MODEL") {
            if let Some(agent) = self.harness.agent.as_mut() {
                agent.model = model;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.build.validate().map_err(|e| ConfigError::Invalid(format!("build: {e}")))?;
        self.questions
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("questions: {e}")))?;
        if self.harness.parallelism == 0 {
            return Err(ConfigError::Invalid("harness.parallelism must be at least 1".into()));
        }
        let l = &self.harness.limits;
        if l.max_steps == 0 || l.timeout_secs.is_nan() || l.timeout_secs <= 0.0 {
            return Err(ConfigError::Invalid("harness.limits must be positive".into()));
        }
        if let BackendConfig::Http(h) = &self.backend {
            if h.model.is_empty() {
                return Err(ConfigError::Invalid("backend.model is required for an HTTP backend".into()));
            }
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> Result<Taxonomy, ConfigError> {
        Ok(match &self.taxonomy {
            Some(p) => Taxonomy::load(p).map_err(|source| ConfigError::Taxonomy {
                path: p.display().to_string(),
                source,
            })?,
            None => Taxonomy::bundled(),
        })
    }

    fn with_cache(&self, g: Generator) -> Generator {
        match &self.cache_dir {
            Some(dir) => g.with_cache(ResponseCache::new(dir)),
            None => g,
        }
    }

    pub fn generator(&self) -> Generator {
        let g = match &self.backend {
            BackendConfig::Stub => Generator::stub(),
            BackendConfig::Http(h) => Generator::new(Arc::new(HttpBackend::new(h.clone()))),
        };
        self.with_cache(g)
    }

    pub fn paraphrase_generators(&self) -> Vec<Generator> {
        self.paraphrasers
            .iter()
            .map(|h| self.with_cache(Generator::new(Arc::new(HttpBackend::new(h.clone())))))
            .collect()
    }

    pub fn tool_service(&self) -> Result<ToolService, ConfigError> {
        Ok(ToolService::new(self.taxonomy()?, self.build.clone(), self.generator()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::parse("[questions]\nper_repo = 2\n[build.path_sampler]\nalpha = 2.0\n", "t").unwrap();
        assert_eq!(cfg.questions.per_repo, 2);
        assert_eq!(cfg.build.path_sampler.alpha, 2.0);
        assert_eq!(cfg.build.path_sampler.beta, BuildParams::default().path_sampler.beta);
        assert_eq!(cfg.harness.limits.max_tool_calls, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("bogus = 1", "t"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn env_overrides_apply() {
        let mut cfg = RunConfig::default();
        let env = |k: &str| match k {
            "REPOSIM_PORT" => Some("9000".to_string()),
            "REPOSIM_AGENT_URL" => Some("http://x/v1".to_string()),
            "REPOSIM_AGENT_MODEL" => Some("m".to_string()),
            _ => None,
        };
        cfg.apply_env(env).unwrap();
        assert_eq!(cfg.server.port, 9000);
        assert_eq!(cfg.harness.agent.as_ref().unwrap().model, "m");
        let bad = |k: &str| (k == "REPOSIM_PORT").then(|| "x".to_string());
        assert!(matches!(cfg.apply_env(bad), Err(ConfigError::Env { .. })));
    }
}
