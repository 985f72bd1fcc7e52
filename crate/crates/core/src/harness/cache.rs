//! Append-only response cache.
//!
//! File layout: a header line `{"format":"kgprobe-response-cache","version":1}`
//! followed by one [`CacheEntry`] per line. The in-memory index maps the
//! entry key to the most recent entry. A torn final line (crash mid-write) is
//! ignored on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const CACHE_FORMAT: &str = "kgprobe-response-cache";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model: String,
    pub raw_text: String,
    pub timestamp: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    index: HashMap<String, CacheEntry>,
    file: Option<File>,
    path: Option<PathBuf>,
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Cache(format!("{}: {e}", path.display()))
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) the cache file at `path`.
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        let mut index = HashMap::new();
        let exists = path.exists() && path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        if exists {
            let reader = BufReader::new(File::open(path).map_err(|e| cache_err(path, e))?);
            let mut lines = reader.lines();
            let header: Header = match lines.next() {
                Some(line) => serde_json::from_str(&line.map_err(|e| cache_err(path, e))?)
                    .map_err(|e| cache_err(path, e))?,
                None => unreachable!("non-empty file has a first line"),
            };
            if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
                return Err(cache_err(path, "unsupported cache format"));
            }
            for (i, line) in lines.enumerate() {
                let line = line.map_err(|e| cache_err(path, e))?;
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(entry) => {
                        index.insert(entry.key.clone(), entry);
                    }
                    Err(e) => warn!("{}:{}: skipping unreadable cache line: {e}", path.display(), i + 2),
                }
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| cache_err(path, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| cache_err(path, e))?;
        if !exists {
            let header = Header {
                format: CACHE_FORMAT.into(),
                version: CACHE_VERSION,
            };
            let mut line = serde_json::to_vec(&header).expect("header serializes");
            line.push(b'\n');
            file.write_all(&line).map_err(|e| cache_err(path, e))?;
        }
        Ok(ResponseCache {
            index,
            file: Some(file),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get(&self, key: &str) -> Option<&CacheEntry> {
        self.index.get(key)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn put(&mut self, entry: CacheEntry) -> Result<(), HarnessError> {
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&entry).expect("entry serializes");
            line.push(b'\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            file.write_all(&line).map_err(|e| cache_err(path, e))?;
            file.flush().map_err(|e| cache_err(path, e))?;
        }
        self.index.insert(entry.key.clone(), entry);
        Ok(())
    }
}
