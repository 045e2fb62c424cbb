//! On-disk cache of large-sample true effects.

use std::path::{Path, PathBuf};

use medmi_core::datagen::DgmParams;
use medmi_core::simstudy::{estimate_truth, SimError, TruthValues};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum TruthError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    params: DgmParams,
    truth: TruthValues,
}

/// Hex SHA-256 of the serialized parameters, `n` and `seed`.
pub fn cache_key(params: &DgmParams, n: usize, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(params).expect("parameters serialize"));
    h.update(n.to_le_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_path(dir: &Path, params: &DgmParams, n: usize, seed: u64) -> PathBuf {
    dir.join(format!("truth-{}.json", &cache_key(params, n, seed)[..16]))
}

/// Cached truth if present and matching, otherwise computed and stored.
/// Returns the values and whether they came from the cache.
pub fn cached_truth(dir: &Path, params: &DgmParams, n: usize, seed: u64) -> Result<(TruthValues, bool), TruthError> {
    let key = cache_key(params, n, seed);
    let path = cache_path(dir, params, n, seed);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
            if entry.key == key && entry.params == *params {
                return Ok((entry.truth, true));
            }
        }
    }
    let truth = estimate_truth(params, n, seed)?;
    write_truth(&path, &CacheEntry { key, params: params.clone(), truth })?;
    Ok((truth, false))
}

fn write_truth(path: &Path, entry: &CacheEntry) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(entry).map_err(|source| IoError::Json { line: 0, source })?;
    std::fs::write(path, text + "\n").map_err(|source| IoError::File { path: path.display().to_string(), source })
}

/// Truth values stored in a file written by [`cached_truth`].
pub fn read_truth(path: &Path) -> Result<TruthValues, IoError> {
    let text = std::io::read_to_string(io::open(path)?)?;
    let entry: CacheEntry = serde_json::from_str(&text).map_err(|source| IoError::Json { line: 0, source })?;
    Ok(entry.truth)
}
