//! Pipeline configuration.
//!
//! The structure mirrors the config file: every field is addressable by a
//! dotted key such as `packaging.k` or `reorder.strategy`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{
    Backend, Decoding, Gateway, HttpBackend, HttpConfig, ResponseCache, ScriptedBackend,
    DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_TEMPERATURE,
};
use crate::corpus::DEFAULT_MIN_WORDS;
use crate::error::{Error, Result};
use crate::generation::AggregateOrder;
use crate::packaging::{DEFAULT_BAG_SIZE, DEFAULT_CHUNK_SIZE, DEFAULT_EVENT_COUNT};
use crate::prompting::PromptSet;
use crate::reordering::ReorderStrategy;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    pub packaging: PackagingConfig,
    pub reorder: ReorderConfig,
    pub generation: GenerationConfig,
    pub backend: BackendConfig,
    pub cache: CacheConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub min_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackagingConfig {
    pub enabled: bool,
    /// Bag size.
    pub k: usize,
    pub n_events: usize,
    pub chunk_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReorderConfig {
    pub enabled: bool,
    pub strategy: ReorderStrategy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub aggregate_order: AggregateOrder,
    /// Truncate the final summary to this many words; 0 disables.
    pub max_summary_words: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub attempts: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    /// Cap on calls reaching the backend; 0 means unlimited.
    pub max_calls: usize,
    /// JSON object of instruction overrides keyed by template name.
    pub prompts_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    /// Persistent cache directory; an in-memory cache is used when unset.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Maximum backend calls in flight.
    pub concurrency: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            min_words: DEFAULT_MIN_WORDS,
        }
    }
}

impl Default for PackagingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            k: DEFAULT_BAG_SIZE,
            n_events: DEFAULT_EVENT_COUNT,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

impl Default for ReorderConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            strategy: ReorderStrategy::default(),
        }
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::default(),
            base_url: "http://localhost:8080/v1".into(),
            model: "default".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            attempts: 3,
            backoff_ms: 1000,
            timeout_s: 120,
            max_calls: 0,
            prompts_file: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { concurrency: 4 }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.packaging.k >= 1, "packaging.k must be >= 1"),
            (self.packaging.n_events >= 1, "packaging.n_events must be >= 1"),
            (self.packaging.chunk_size >= 2, "packaging.chunk_size must be >= 2"),
            (self.run.concurrency >= 1, "run.concurrency must be >= 1"),
            (self.corpus.min_words >= 1, "corpus.min_words must be >= 1"),
            (self.backend.max_output_tokens >= 1, "backend.max_output_tokens must be >= 1"),
            (
                (0.0..=2.0).contains(&self.backend.temperature),
                "backend.temperature must be in [0, 2]",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, message)) => Err(Error::Config((*message).to_string())),
            None => Ok(()),
        }
    }

    pub fn build_backend(&self) -> Result<Arc<dyn Backend>> {
        let b = &self.backend;
        Ok(match b.kind {
            BackendKind::Scripted => Arc::new(ScriptedBackend::new()),
            BackendKind::Http => {
                let mut http = HttpConfig::new(&b.base_url, &b.model).with_env_key();
                http.attempts = b.attempts.max(1);
                http.backoff = Duration::from_millis(b.backoff_ms);
                http.timeout = Duration::from_secs(b.timeout_s.max(1));
                Arc::new(HttpBackend::new(http).map_err(|e| Error::Config(e.to_string()))?)
            }
        })
    }

    pub fn build_cache(&self) -> Result<Arc<ResponseCache>> {
        Ok(Arc::new(match &self.cache.dir {
            Some(dir) => ResponseCache::on_disk(dir).map_err(|e| Error::Config(e.to_string()))?,
            None => ResponseCache::in_memory(),
        }))
    }

    /// Wires backend and cache according to this configuration.
    pub fn build_gateway(&self) -> Result<Gateway> {
        self.gateway_for(self.build_backend()?, self.build_cache()?)
    }

    pub fn gateway_for(&self, backend: Arc<dyn Backend>, cache: Arc<ResponseCache>) -> Result<Gateway> {
        let prompts = match &self.backend.prompts_file {
            Some(path) => PromptSet::from_override_file(path).map_err(|e| Error::Config(e.to_string()))?,
            None => PromptSet::default(),
        };
        Ok(Gateway::new(backend, cache)
            .with_concurrency(self.run.concurrency)
            .with_budget((self.backend.max_calls > 0).then_some(self.backend.max_calls))
            .with_decoding(Decoding {
                max_output_tokens: self.backend.max_output_tokens,
                temperature: self.backend.temperature,
            })
            .with_prompts(prompts))
    }
}
