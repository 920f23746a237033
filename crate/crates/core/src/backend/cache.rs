//! Persistent response cache.
//!
//! On disk every entry is one file named by the hex SHA-256 key. The file holds
//! an 8-byte little-endian length, the UTF-8 response text and a 32-byte
//! SHA-256 checksum of that text. Entries that fail the checksum are treated
//! as misses and overwritten.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Backend, BackendError, CompletionResult, PromptRequest};

const LEN_PREFIX: usize = 8;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache entry {0} is corrupt")]
    Corrupt(String),
    #[error("cache i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
    pub corrupt: usize,
}

enum Store {
    Disk(PathBuf),
    Memory(Mutex<HashMap<String, String>>),
}

pub struct ResponseCache {
    store: Store,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    corrupt_seen: AtomicUsize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn encode_entry(text: &str) -> Vec<u8> {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(LEN_PREFIX + bytes.len() + CHECKSUM_LEN);
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
    out.extend_from_slice(&Sha256::digest(bytes));
    out
}

fn decode_entry(raw: &[u8]) -> Option<String> {
    let len_bytes: [u8; LEN_PREFIX] = raw.get(..LEN_PREFIX)?.try_into().ok()?;
    let len = usize::try_from(u64::from_le_bytes(len_bytes)).ok()?;
    if raw.len() != LEN_PREFIX.checked_add(len)?.checked_add(CHECKSUM_LEN)? {
        return None;
    }
    let body = &raw[LEN_PREFIX..LEN_PREFIX + len];
    if Sha256::digest(body).as_slice() != &raw[LEN_PREFIX + len..] {
        return None;
    }
    String::from_utf8(body.to_vec()).ok()
}

/// Cache key: hex SHA-256 over the length-prefixed backend name, template id,
/// prompt, token limit and temperature.
pub fn cache_key(backend_name: &str, request: &PromptRequest) -> String {
    let mut hasher = Sha256::new();
    for field in [
        backend_name.as_bytes(),
        request.template_id.as_str().as_bytes(),
        request.rendered_prompt.as_bytes(),
    ] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field);
    }
    hasher.update(request.max_output_tokens.to_le_bytes());
    hasher.update(request.temperature.to_bits().to_le_bytes());
    hex::encode(hasher.finalize())
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::with_store(Store::Memory(Mutex::new(HashMap::new())))
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self::with_store(Store::Disk(dir)))
    }

    fn with_store(store: Store) -> Self {
        Self {
            store,
            in_flight: Mutex::new(HashMap::new()),
            corrupt_seen: AtomicUsize::new(0),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        match &self.store {
            Store::Disk(dir) => Some(dir),
            Store::Memory(_) => None,
        }
    }

    /// Corrupt entries encountered (and overwritten) by lookups so far.
    pub fn corrupt_seen(&self) -> usize {
        self.corrupt_seen.load(Ordering::SeqCst)
    }

    fn entry_path(dir: &Path, key: &str) -> PathBuf {
        dir.join(key)
    }

    fn read(&self, key: &str) -> Result<Option<String>, CacheError> {
        match &self.store {
            Store::Memory(map) => Ok(map.lock().unwrap().get(key).cloned()),
            Store::Disk(dir) => {
                let path = Self::entry_path(dir, key);
                match fs::read(&path) {
                    Ok(raw) => decode_entry(&raw)
                        .map(Some)
                        .ok_or_else(|| CacheError::Corrupt(key.to_string())),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(io_err(&path)(e)),
                }
            }
        }
    }

    /// Looks up an entry; a corrupt entry counts as a miss.
    pub fn get(&self, key: &str) -> Result<Option<String>, CacheError> {
        match self.read(key) {
            Err(CacheError::Corrupt(key)) => {
                tracing::warn!(%key, "corrupt cache entry, treating as miss");
                self.corrupt_seen.fetch_add(1, Ordering::SeqCst);
                Ok(None)
            }
            other => other,
        }
    }

    pub fn put(&self, key: &str, text: &str) -> Result<(), CacheError> {
        match &self.store {
            Store::Memory(map) => {
                map.lock().unwrap().insert(key.to_string(), text.to_string());
                Ok(())
            }
            Store::Disk(dir) => {
                let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
                tmp.write_all(&encode_entry(text)).map_err(io_err(tmp.path()))?;
                let path = Self::entry_path(dir, key);
                tmp.persist(&path).map_err(|e| io_err(&path)(e.error))?;
                Ok(())
            }
        }
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.in_flight
            .lock()
            .unwrap()
            .entry(key.to_string())
            .or_default()
            .clone()
    }

    fn release_key(&self, key: &str) {
        let mut map = self.in_flight.lock().unwrap();
        if map.get(key).is_some_and(|lock| Arc::strong_count(lock) == 1) {
            map.remove(key);
        }
    }

    fn hit(backend: &dyn Backend, text: String, started: Instant) -> CompletionResult {
        CompletionResult {
            text,
            backend_name: backend.name().to_string(),
            from_cache: true,
            latency_ms: started.elapsed().as_millis() as u64,
            prompt_tokens: 0,
            output_tokens: 0,
        }
    }

    /// Returns the cached completion for `request`, or calls the backend once
    /// and stores the answer. Concurrent identical requests wait for the
    /// first one, so each key reaches the backend at most once.
    pub fn cached_complete(
        &self,
        backend: &dyn Backend,
        request: &PromptRequest,
    ) -> Result<CompletionResult, BackendError> {
        let started = Instant::now();
        let key = cache_key(backend.name(), request);
        if let Some(text) = self.get(&key)? {
            return Ok(Self::hit(backend, text, started));
        }
        let lock = self.key_lock(&key);
        let result = {
            let _guard = lock.lock().unwrap();
            // already counted if corrupt
            let recheck = match self.read(&key) {
                Err(CacheError::Corrupt(_)) => None,
                other => other?,
            };
            match recheck {
                Some(text) => Ok(Self::hit(backend, text, started)),
                None => backend.complete(request).and_then(|mut result| {
                    self.put(&key, &result.text)?;
                    result.from_cache = false;
                    Ok(result)
                }),
            }
        };
        drop(lock);
        self.release_key(&key);
        result
    }

    /// Calls the backend unconditionally and overwrites the stored entry.
    pub fn refresh(
        &self,
        backend: &dyn Backend,
        request: &PromptRequest,
    ) -> Result<CompletionResult, BackendError> {
        let key = cache_key(backend.name(), request);
        let lock = self.key_lock(&key);
        let result = {
            let _guard = lock.lock().unwrap();
            backend.complete(request).and_then(|mut result| {
                self.put(&key, &result.text)?;
                result.from_cache = false;
                Ok(result)
            })
        };
        drop(lock);
        self.release_key(&key);
        result
    }

    pub fn stats(&self) -> Result<CacheStats, CacheError> {
        match &self.store {
            Store::Memory(map) => {
                let map = map.lock().unwrap();
                Ok(CacheStats {
                    entries: map.len(),
                    bytes: map.values().map(|v| v.len() as u64).sum(),
                    corrupt: 0,
                })
            }
            Store::Disk(dir) => {
                let mut stats = CacheStats::default();
                for path in self.entry_paths(dir)? {
                    let raw = fs::read(&path).map_err(io_err(&path))?;
                    stats.bytes += raw.len() as u64;
                    match decode_entry(&raw) {
                        Some(_) => stats.entries += 1,
                        None => stats.corrupt += 1,
                    }
                }
                Ok(stats)
            }
        }
    }

    /// Removes every entry; returns how many were removed.
    pub fn clear(&self) -> Result<usize, CacheError> {
        match &self.store {
            Store::Memory(map) => {
                let mut map = map.lock().unwrap();
                let n = map.len();
                map.clear();
                Ok(n)
            }
            Store::Disk(dir) => {
                let paths = self.entry_paths(dir)?;
                for path in &paths {
                    fs::remove_file(path).map_err(io_err(path))?;
                }
                Ok(paths.len())
            }
        }
    }

    fn entry_paths(&self, dir: &Path) -> Result<Vec<PathBuf>, CacheError> {
        let mut paths = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name();
            let is_key = name
                .to_str()
                .is_some_and(|n| n.len() == 64 && n.bytes().all(|b| b.is_ascii_hexdigit()));
            if is_key && entry.path().is_file() {
                paths.push(entry.path());
            }
        }
        paths.sort();
        Ok(paths)
    }
}
