//! Embedding cache.
//!
//! On disk the cache is a JSON Lines file, one `{"key": ..., "vector": [...]}`
//! object per line, only ever appended to. Keys are
//! `"<provider id>\t<model>\t<sha256 of text>"`. When a file is loaded, later
//! lines win over earlier ones and lines that fail to parse (for example a
//! torn final line after a crash) are skipped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::EmbeddingVector;

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    vector: EmbeddingVector,
}

pub struct EmbeddingCache {
    entries: RwLock<HashMap<String, EmbeddingVector>>,
    file: Option<Mutex<File>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            file: None,
        }
    }

    /// Opens (creating if needed) an append-only cache file.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                    entries.insert(entry.key, entry.vector);
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let contents_len = file.metadata()?.len();
        if contents_len > 0 && !ends_with_newline(path)? {
            file.write_all(b"\n")?;
        }
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<EmbeddingVector> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(key)
            .cloned()
    }

    pub fn insert(&self, key: String, vector: EmbeddingVector) -> std::io::Result<()> {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&CacheLine {
                key: key.clone(),
                vector: vector.clone(),
            })
            .map_err(std::io::Error::other)?;
            line.push('\n');
            // One write per line keeps concurrent appenders from interleaving.
            file.lock()
                .expect("cache file lock poisoned")
                .write_all(line.as_bytes())?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(key, vector);
        Ok(())
    }
}

fn ends_with_newline(path: &Path) -> std::io::Result<bool> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = File::open(path)?;
    f.seek(SeekFrom::End(-1))?;
    let mut last = [0u8; 1];
    f.read_exact(&mut last)?;
    Ok(last[0] == b'\n')
}
