//! Text-generation backends.
//!
//! A [`Backend`] turns one rendered prompt into one completion. The
//! [`Gateway`] is what the pipeline talks to: it puts the persistent
//! [`ResponseCache`] in front of the backend, bounds the number of backend
//! calls in flight, enforces an optional call budget and hands back a
//! [`CallRecord`] for every request so runs can be accounted exactly.

mod cache;
mod http;
mod scripted;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheError, CacheStats, ResponseCache};
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use scripted::ScriptedBackend;

use crate::prompting::{PromptSet, TemplateId};

pub const DEFAULT_TEMPERATURE: f32 = 0.0;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable after {attempts} attempt(s): {message}")]
    Unreachable { attempts: u32, message: String },
    #[error("backend rejected request with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("backend call budget of {limit} exhausted")]
    BudgetExceeded { limit: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// One prompt, ready to send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub template_id: TemplateId,
    pub rendered_prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

impl PromptRequest {
    pub fn new(
        template_id: TemplateId,
        rendered_prompt: impl Into<String>,
        max_output_tokens: u32,
        temperature: f32,
    ) -> Result<Self, BackendError> {
        let rendered_prompt = rendered_prompt.into();
        if rendered_prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_output_tokens must be >= 1".into()));
        }
        if !(0.0..=2.0).contains(&temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        Ok(Self {
            template_id,
            rendered_prompt,
            max_output_tokens,
            temperature,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub backend_name: String,
    pub from_cache: bool,
    pub latency_ms: u64,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }
}

/// Hex SHA-256 of a prompt; identifies prompts in traces.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// What happened for one request issued through the [`Gateway`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub template_id: TemplateId,
    pub prompt_digest: String,
    pub from_cache: bool,
    pub latency_ms: u64,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

/// Counting semaphore bounding backend calls in flight.
#[derive(Debug)]
struct Gate {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.freed.wait(available).unwrap();
        }
        *available -= 1;
        GatePermit(self)
    }
}

struct GatePermit<'a>(&'a Gate);

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoding {
    pub max_output_tokens: u32,
    pub temperature: f32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

/// Backend wrapper that applies the in-flight bound and call budget, and
/// counts calls that actually reach the backend.
struct Metered<'a> {
    gateway: &'a Gateway,
}

impl Backend for Metered<'_> {
    fn name(&self) -> &str {
        self.gateway.backend.name()
    }

    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, BackendError> {
        let gw = self.gateway;
        if let Some(limit) = gw.budget {
            let claimed = gw.issued.fetch_add(1, Ordering::SeqCst);
            if claimed >= limit {
                gw.issued.fetch_sub(1, Ordering::SeqCst);
                return Err(BackendError::BudgetExceeded { limit });
            }
        } else {
            gw.issued.fetch_add(1, Ordering::SeqCst);
        }
        let _permit = gw.gate.acquire();
        let in_flight = gw.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        gw.peak_in_flight.fetch_max(in_flight, Ordering::SeqCst);
        let result = gw.backend.complete(request);
        gw.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

/// Cache-mediated, concurrency-bounded access to a backend.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Arc<ResponseCache>,
    prompts: PromptSet,
    decoding: Decoding,
    gate: Gate,
    concurrency: usize,
    budget: Option<usize>,
    issued: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, cache: Arc<ResponseCache>) -> Self {
        Self {
            backend,
            cache,
            prompts: PromptSet::default(),
            decoding: Decoding::default(),
            gate: Gate::new(1),
            concurrency: 1,
            budget: None,
            issued: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    /// Gateway over a fresh in-memory cache.
    pub fn in_memory(backend: Arc<dyn Backend>) -> Self {
        Self::new(backend, Arc::new(ResponseCache::in_memory()))
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.concurrency = limit.max(1);
        self.gate = Gate::new(self.concurrency);
        self
    }

    /// Maximum backend calls in flight.
    pub fn concurrency(&self) -> usize {
        self.concurrency
    }

    pub fn with_budget(mut self, max_calls: Option<usize>) -> Self {
        self.budget = max_calls;
        self
    }

    pub fn with_decoding(mut self, decoding: Decoding) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Calls that reached the backend since construction.
    pub fn backend_calls(&self) -> usize {
        self.issued.load(Ordering::SeqCst)
    }

    /// Highest number of backend calls observed in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn request(&self, template_id: TemplateId, prompt: String) -> Result<PromptRequest, BackendError> {
        PromptRequest::new(
            template_id,
            prompt,
            self.decoding.max_output_tokens,
            self.decoding.temperature,
        )
    }

    /// Sends a rendered prompt through the cache.
    pub fn call(
        &self,
        template_id: TemplateId,
        prompt: String,
    ) -> Result<(CompletionResult, CallRecord), BackendError> {
        let request = self.request(template_id, prompt)?;
        let started = Instant::now();
        let result = self.cache.cached_complete(&Metered { gateway: self }, &request)?;
        Ok(self.record(&request, result, started))
    }

    /// Like [`Gateway::call`] but skips the cache lookup and overwrites the
    /// stored entry. Used to retry after an unusable answer.
    pub fn call_fresh(
        &self,
        template_id: TemplateId,
        prompt: String,
    ) -> Result<(CompletionResult, CallRecord), BackendError> {
        let request = self.request(template_id, prompt)?;
        let started = Instant::now();
        let result = self.cache.refresh(&Metered { gateway: self }, &request)?;
        Ok(self.record(&request, result, started))
    }

    fn record(
        &self,
        request: &PromptRequest,
        mut result: CompletionResult,
        started: Instant,
    ) -> (CompletionResult, CallRecord) {
        if result.from_cache {
            result.latency_ms = started.elapsed().as_millis() as u64;
        }
        let record = CallRecord {
            template_id: request.template_id,
            prompt_digest: prompt_digest(&request.rendered_prompt),
            from_cache: result.from_cache,
            latency_ms: result.latency_ms,
            prompt_tokens: result.prompt_tokens,
            output_tokens: result.output_tokens,
        };
        (result, record)
    }
}
