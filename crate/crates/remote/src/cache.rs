//! Content-addressed on-disk cache of remote responses.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    /// Serve hits, store misses.
    #[default]
    ReadWrite,
    /// Serve hits; a miss is an error and nothing is fetched.
    ReadOnly,
    /// Neither read nor write.
    Bypass,
}

/// One stored response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub query: String,
    /// Seconds since the Unix epoch.
    pub fetched_at: u64,
    pub response: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryCache {
    pub root: PathBuf,
    pub policy: CachePolicy,
}

/// Hex sha256 of the canonical query text.
pub fn cache_key(query: &str) -> String {
    let digest = Sha256::digest(query.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl QueryCache {
    pub fn new(root: impl Into<PathBuf>, policy: CachePolicy) -> Self {
        QueryCache { root: root.into(), policy }
    }

    /// A cache that never touches the disk.
    pub fn bypass() -> Self {
        QueryCache::new(PathBuf::new(), CachePolicy::Bypass)
    }

    pub fn path_for(&self, query: &str) -> PathBuf {
        let key = cache_key(query);
        self.root.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, query: &str) -> io::Result<Option<CacheEntry>> {
        if self.policy == CachePolicy::Bypass {
            return Ok(None);
        }
        let path = self.path_for(query);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        if entry.query != query {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: stored query text does not match its key", path.display()),
            ));
        }
        Ok(Some(entry))
    }

    /// Stores `response` unless an entry already exists; entries are never
    /// overwritten. Returns whether a new entry was written.
    pub fn put(&self, query: &str, response: &Value) -> io::Result<bool> {
        if self.policy != CachePolicy::ReadWrite {
            return Ok(false);
        }
        let path = self.path_for(query);
        if path.exists() {
            return Ok(false);
        }
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir)?;
        let entry = CacheEntry {
            query: query.to_string(),
            fetched_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            response: response.clone(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, &entry)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(true),
            // another writer got there first
            Err(e) if path.exists() => {
                drop(e);
                Ok(false)
            }
            Err(e) => Err(e.error),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn layout_and_immutability() {
        let dir = tempfile::tempdir().unwrap();
        let cache = QueryCache::new(dir.path(), CachePolicy::ReadWrite);
        let key = cache_key("SELECT 1");
        assert_eq!(key.len(), 64);
        assert_eq!(cache.path_for("SELECT 1"), dir.path().join(&key[..2]).join(format!("{key}.json")));
        assert!(cache.get("SELECT 1").unwrap().is_none());
        assert!(cache.put("SELECT 1", &json!({"a": 1})).unwrap());
        assert!(!cache.put("SELECT 1", &json!({"a": 2})).unwrap());
        assert_eq!(cache.get("SELECT 1").unwrap().unwrap().response, json!({"a": 1}));
    }

    #[test]
    fn policies() {
        let dir = tempfile::tempdir().unwrap();
        let ro = QueryCache::new(dir.path(), CachePolicy::ReadOnly);
        assert!(!ro.put("q", &json!(1)).unwrap());
        assert!(ro.get("q").unwrap().is_none());
        QueryCache::new(dir.path(), CachePolicy::ReadWrite).put("q", &json!(1)).unwrap();
        assert!(ro.get("q").unwrap().is_some());
        assert!(QueryCache::new(dir.path(), CachePolicy::Bypass).get("q").unwrap().is_none());
    }

    #[test]
    fn concurrent_writers_leave_one_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = QueryCache::new(dir.path(), CachePolicy::ReadWrite);
        let written: usize = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|i| {
                    let c = cache.clone();
                    s.spawn(move || c.put("same", &json!(i)).unwrap() as usize)
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum()
        });
        assert_eq!(written, 1);
        let files: Vec<_> = fs::read_dir(cache.path_for("same").parent().unwrap()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }
}
