use std::path::Path;

use hera_core::backend::{CacheStats, ResponseCache};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct CacheReport {
    pub dir: String,
    #[serde(flatten)]
    pub stats: CacheStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed: Option<usize>,
}

fn open(dir: &Path) -> Result<ResponseCache, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!("cache directory {} does not exist", dir.display())));
    }
    ResponseCache::on_disk(dir).map_err(|e| CliError::Input(e.to_string()))
}

pub fn cache_stats(dir: &Path) -> Result<CacheReport, CliError> {
    let stats = open(dir)?.stats().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(CacheReport {
        dir: dir.display().to_string(),
        stats,
        removed: None,
    })
}

pub fn cache_clear(dir: &Path) -> Result<CacheReport, CliError> {
    let cache = open(dir)?;
    let removed = cache.clear().map_err(|e| CliError::Output(e.to_string()))?;
    let stats = cache.stats().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(CacheReport {
        dir: dir.display().to_string(),
        stats,
        removed: Some(removed),
    })
}
