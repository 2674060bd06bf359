//! Content-addressed on-disk store for provider responses.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::ProviderError;

/// SHA-256 over `(provider kind, model id, canonical request bytes)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(kind: &str, model_id: &str, request: &[u8]) -> Self {
        let mut h = Sha256::new();
        // length prefixes keep ("ab", "c") and ("a", "bc") apart
        for part in [kind.as_bytes(), model_id.as_bytes(), request] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        Self(hex::encode(h.finalize()))
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| ProviderError::Io(e.to_string()))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.root.join(&key.0[..2]).join(&key.0)
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<Vec<u8>>, ProviderError> {
        match std::fs::read(self.path(key)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ProviderError::Io(e.to_string())),
        }
    }

    /// Store `value` under `key`. The first completed write wins; later writers
    /// of the same key leave the stored copy untouched.
    pub fn put(&self, key: &CacheKey, value: &[u8]) -> Result<(), ProviderError> {
        let io = |e: std::io::Error| ProviderError::Io(e.to_string());
        let path = self.path(key);
        if path.exists() {
            return Ok(());
        }
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(value).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(()),
            Err(e) if path.exists() => {
                drop(e);
                Ok(())
            }
            Err(e) => Err(io(e.error)),
        }
    }
}
