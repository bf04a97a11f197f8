//! Content-addressed response cache: one JSON file per entry at
//! `<dir>/<first two hex chars>/<sha256>.json`. Entries are written to a
//! temporary file and renamed into place, so readers never see partial
//! entries. Nothing is evicted automatically.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::seed::sha256_hex;

#[derive(Serialize, Deserialize)]
struct Entry {
    completion: String,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    tmp_counter: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_owned(),
            tmp_counter: AtomicU64::new(0),
        })
    }

    /// Key over the backend identity (model and decoding parameters) and the
    /// rendered prompt.
    pub fn key(identity: &str, rendered: &str) -> String {
        let mut bytes = Vec::with_capacity(identity.len() + rendered.len() + 1);
        bytes.extend_from_slice(identity.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(rendered.as_bytes());
        sha256_hex(&bytes)
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> std::io::Result<Option<String>> {
        match std::fs::read(self.path(key)) {
            Ok(bytes) => Ok(serde_json::from_slice::<Entry>(&bytes)
                .ok()
                .map(|e| e.completion)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &str, completion: &str) -> std::io::Result<()> {
        let path = self.path(key);
        let parent = path.parent().expect("entry paths have a parent");
        std::fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_vec(&Entry {
            completion: completion.to_owned(),
        })
        .map_err(std::io::Error::other)?;
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, &path)
    }
}
