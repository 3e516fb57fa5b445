//! Service configuration, read from `FMEA_*` environment variables.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use fmea_core::generation::PromptTemplates;
use fmea_core::index::{EmbeddingProvider, HashEmbedder, ScriptedEmbedder};
use fmea_core::service::mock::{ScriptedTextService, UnavailableTextService};
use fmea_core::service::TextService;

use crate::providers::{HttpEmbedder, HttpTextService};

const IN_MEMORY: &str = ":memory:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub listen_addr: SocketAddr,
    /// `None` keeps everything in memory.
    pub db_path: Option<PathBuf>,
    pub vector_store_path: Option<PathBuf>,
    pub text_service_url: Option<String>,
    pub text_model: String,
    pub text_api_key: Option<String>,
    pub text_mock_fixture: Option<PathBuf>,
    pub embedding_url: Option<String>,
    pub embedding_model: String,
    pub embedding_api_key: Option<String>,
    pub embedding_dim: Option<usize>,
    pub embedding_mock_fixture: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub request_timeout: Duration,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            db_path: Some(PathBuf::from("fmea.sqlite")),
            vector_store_path: Some(PathBuf::from("fmea.fvs")),
            text_service_url: None,
            text_model: "default".into(),
            text_api_key: None,
            text_mock_fixture: None,
            embedding_url: None,
            embedding_model: "default".into(),
            embedding_api_key: None,
            embedding_dim: None,
            embedding_mock_fixture: None,
            template_dir: None,
            request_timeout: Duration::from_secs(60),
        }
    }
}

impl Config {
    pub fn from_env() -> anyhow::Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Builds a config from any key lookup; empty values count as unset.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> anyhow::Result<Self> {
        let get = |k: &str| lookup(k).map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
        let path = |k: &str, default: Option<PathBuf>| match get(k) {
            Some(v) if v == IN_MEMORY => None,
            Some(v) => Some(PathBuf::from(v)),
            None => default,
        };
        let d = Config::default();
        let cfg = Config {
            listen_addr: match get("FMEA_LISTEN_ADDR") {
                Some(v) => v.parse().with_context(|| format!("FMEA_LISTEN_ADDR `{v}`"))?,
                None => d.listen_addr,
            },
            db_path: path("FMEA_DB_PATH", d.db_path),
            vector_store_path: path("FMEA_VECTOR_STORE_PATH", d.vector_store_path),
            text_service_url: get("FMEA_TEXT_SERVICE_URL"),
            text_model: get("FMEA_TEXT_MODEL").unwrap_or(d.text_model),
            text_api_key: get("FMEA_TEXT_API_KEY"),
            text_mock_fixture: get("FMEA_TEXT_MOCK_FIXTURE").map(PathBuf::from),
            embedding_url: get("FMEA_EMBEDDING_URL"),
            embedding_model: get("FMEA_EMBEDDING_MODEL").unwrap_or(d.embedding_model),
            embedding_api_key: get("FMEA_EMBEDDING_API_KEY"),
            embedding_dim: get("FMEA_EMBEDDING_DIM")
                .map(|v| v.parse().with_context(|| format!("FMEA_EMBEDDING_DIM `{v}`")))
                .transpose()?,
            embedding_mock_fixture: get("FMEA_EMBEDDING_MOCK_FIXTURE").map(PathBuf::from),
            template_dir: get("FMEA_TEMPLATE_DIR").map(PathBuf::from),
            request_timeout: match get("FMEA_TIMEOUT_SECS") {
                Some(v) => Duration::from_secs(v.parse().with_context(|| format!("FMEA_TIMEOUT_SECS `{v}`"))?),
                None => d.request_timeout,
            },
        };
        if cfg.text_service_url.is_some() && cfg.text_mock_fixture.is_some() {
            bail!("set only one of FMEA_TEXT_SERVICE_URL and FMEA_TEXT_MOCK_FIXTURE");
        }
        if cfg.embedding_url.is_some() && cfg.embedding_mock_fixture.is_some() {
            bail!("set only one of FMEA_EMBEDDING_URL and FMEA_EMBEDDING_MOCK_FIXTURE");
        }
        Ok(cfg)
    }

    /// Connects the configured providers.
    ///
    /// Without a text service, ingestion falls back to rule-based cleaning and
    /// generation answers 503. Without an embedding service, the built-in
    /// hashing embedder is used.
    pub fn providers(&self) -> anyhow::Result<Providers> {
        let (text, text_label): (Arc<dyn TextService>, _) = match (&self.text_mock_fixture, &self.text_service_url) {
            (Some(path), _) => (
                Arc::new(ScriptedTextService::from_file(path).with_context(|| "loading FMEA_TEXT_MOCK_FIXTURE")?),
                "mock",
            ),
            (None, Some(url)) => (
                Arc::new(HttpTextService::new(url, &self.text_model, self.text_api_key.clone(), self.request_timeout)),
                "http",
            ),
            (None, None) => (Arc::new(UnavailableTextService::permanent()), "unconfigured"),
        };
        let (embedder, embedding_label): (Arc<dyn EmbeddingProvider>, _) =
            match (&self.embedding_mock_fixture, &self.embedding_url) {
                (Some(path), _) => {
                    let scripted = ScriptedEmbedder::from_file(path).context("loading FMEA_EMBEDDING_MOCK_FIXTURE")?;
                    let dim = scripted.dim();
                    (Arc::new(scripted.with_fallback(HashEmbedder::new(dim))), "mock")
                }
                (None, Some(url)) => (
                    Arc::new(
                        HttpEmbedder::connect(
                            url,
                            &self.embedding_model,
                            self.embedding_api_key.clone(),
                            self.embedding_dim,
                            self.request_timeout,
                        )
                        .context("connecting to FMEA_EMBEDDING_URL")?,
                    ),
                    "http",
                ),
                (None, None) => (Arc::new(HashEmbedder::default()), "hashing"),
            };
        let templates = match &self.template_dir {
            Some(dir) => PromptTemplates::from_dir(dir).context("loading FMEA_TEMPLATE_DIR")?,
            None => PromptTemplates::builtin(),
        };
        Ok(Providers {
            text,
            embedder,
            templates: Arc::new(templates),
            text_label: text_label.into(),
            embedding_label: embedding_label.into(),
        })
    }
}

/// Connected text and embedding providers plus labels for `/health`.
#[derive(Clone)]
pub struct Providers {
    pub text: Arc<dyn TextService>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub templates: Arc<PromptTemplates>,
    pub text_label: String,
    pub embedding_label: String,
}

impl Providers {
    /// Given services with the hashing embedder, for tests and examples.
    pub fn with_text(text: Arc<dyn TextService>) -> Self {
        Self {
            text,
            embedder: Arc::new(HashEmbedder::default()),
            templates: Arc::new(PromptTemplates::builtin()),
            text_label: "mock".into(),
            embedding_label: "hashing".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn from(pairs: &[(&str, &str)]) -> anyhow::Result<Config> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Config::from_lookup(|k| map.get(k).cloned())
    }

    #[test]
    fn defaults_apply_when_unset() {
        assert_eq!(from(&[]).unwrap(), Config::default());
        assert_eq!(from(&[("FMEA_TEXT_SERVICE_URL", "  ")]).unwrap().text_service_url, None);
    }

    #[test]
    fn memory_paths_and_parsing() {
        let c = from(&[
            ("FMEA_LISTEN_ADDR", "0.0.0.0:9000"),
            ("FMEA_DB_PATH", ":memory:"),
            ("FMEA_VECTOR_STORE_PATH", "/tmp/s.fvs"),
            ("FMEA_EMBEDDING_DIM", "384"),
            ("FMEA_TIMEOUT_SECS", "5"),
        ])
        .unwrap();
        assert_eq!(c.listen_addr.port(), 9000);
        assert_eq!(c.db_path, None);
        assert_eq!(c.vector_store_path, Some(PathBuf::from("/tmp/s.fvs")));
        assert_eq!(c.embedding_dim, Some(384));
        assert_eq!(c.request_timeout, Duration::from_secs(5));
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(from(&[("FMEA_LISTEN_ADDR", "nowhere")]).is_err());
        assert!(from(&[("FMEA_EMBEDDING_DIM", "many")]).is_err());
        assert!(from(&[("FMEA_TEXT_SERVICE_URL", "http://x"), ("FMEA_TEXT_MOCK_FIXTURE", "f.json")]).is_err());
    }

    #[test]
    fn unconfigured_providers_fall_back() {
        let p = Config::default().providers().unwrap();
        assert_eq!((p.text_label.as_str(), p.embedding_label.as_str()), ("unconfigured", "hashing"));
        assert_eq!(p.embedder.dim(), HashEmbedder::DEFAULT_DIM);
    }
}
