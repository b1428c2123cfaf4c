use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde_json::Value as Json;

use super::CacheKey;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// One JSON file per key: `<root>/<model>/<stage>/<digest>.json`.
///
/// Writes go to a temporary file that is renamed into place, so readers never
/// observe partial content and concurrent writers of the same key are safe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let model: String = key
            .model_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        self.root
            .join(model)
            .join(key.stage.as_str().to_ascii_lowercase())
            .join(format!("{}.json", key.digest))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<Json>, String> {
        let path = self.path_for(key);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| format!("corrupt cache entry {}: {e}", path.display())),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(format!("cannot read {}: {e}", path.display())),
        }
    }

    pub fn put(&self, key: &CacheKey, value: &Json) -> Result<(), String> {
        let path = self.path_for(key);
        let dir = path.parent().expect("cache paths have a parent");
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            key.digest,
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let bytes = serde_json::to_vec_pretty(value).expect("json values serialize");
        fs::write(&tmp, bytes).map_err(|e| format!("cannot write {}: {e}", tmp.display()))?;
        fs::rename(&tmp, &path).map_err(|e| format!("cannot move cache entry into {}: {e}", path.display()))
    }
}
