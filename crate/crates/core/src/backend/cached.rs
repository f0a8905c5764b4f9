use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{BackendError, ModelBackend, Query, QueryContext, SignalValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Misses go to the inner backend and are persisted.
    Record,
    /// Misses are errors; no inner backend is consulted.
    Replay,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    value: SignalValue,
}

/// Memoizing record/replay wrapper. The cache file holds one JSON object per line.
pub struct CachedBackend {
    inner: Option<Arc<dyn ModelBackend>>,
    mode: CacheMode,
    path: PathBuf,
    entries: Mutex<HashMap<String, SignalValue>>,
}

fn cache_key(ctx: &QueryContext<'_>, query: &Query) -> String {
    format!("{}/{}/{}", ctx.item_id, ctx.condition, query.key())
}

fn read_cache(path: &Path) -> io::Result<HashMap<String, SignalValue>> {
    let mut out = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e),
    };
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // A torn final line from an interrupted write is skipped.
        if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
            out.insert(entry.key, entry.value);
        }
    }
    Ok(out)
}

/// Wraps `inner`, persisting every first-seen query to `cache_path`.
pub fn record_cache(
    inner: Arc<dyn ModelBackend>,
    cache_path: impl AsRef<Path>,
) -> io::Result<CachedBackend> {
    let path = cache_path.as_ref().to_path_buf();
    // Fail early when the location is not writable.
    OpenOptions::new().create(true).append(true).open(&path)?;
    Ok(CachedBackend {
        inner: Some(inner),
        mode: CacheMode::Record,
        entries: Mutex::new(read_cache(&path)?),
        path,
    })
}

/// Strict replay from an existing cache file.
pub fn replay_cache(cache_path: impl AsRef<Path>) -> io::Result<CachedBackend> {
    let path = cache_path.as_ref().to_path_buf();
    if !path.exists() {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("cache file {} not found", path.display()),
        ));
    }
    Ok(CachedBackend {
        inner: None,
        mode: CacheMode::Replay,
        entries: Mutex::new(read_cache(&path)?),
        path,
    })
}

impl CachedBackend {
    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn persist(&self, key: &str, value: &SignalValue) -> Result<(), BackendError> {
        let mut line = serde_json::to_string(&CacheLine {
            key: key.to_string(),
            value: value.clone(),
        })
        .map_err(|e| BackendError::CacheWrite(e.to_string()))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| BackendError::CacheWrite(e.to_string()))?;
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| BackendError::CacheWrite(e.to_string()))
    }
}

impl ModelBackend for CachedBackend {
    fn query(&self, ctx: &QueryContext<'_>, query: &Query) -> Result<SignalValue, BackendError> {
        let key = cache_key(ctx, query);
        // Held across the inner call so record mode serializes writes.
        let mut entries = self.entries.lock().expect("cache lock");
        if let Some(v) = entries.get(&key) {
            return Ok(v.clone());
        }
        let inner = match (&self.inner, self.mode) {
            (Some(inner), CacheMode::Record) => inner,
            _ => return Err(BackendError::ReplayMiss(key)),
        };
        let value = inner.query(ctx, query)?;
        self.persist(&key, &value)?;
        entries.insert(key, value.clone());
        Ok(value)
    }
}
