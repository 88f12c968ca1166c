use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{LlmError, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheLine {
    request_key: String,
    text: String,
    usage: Usage,
}

/// Append-only JSONL store of successful responses keyed by request key.
/// A torn trailing line from a crash is ignored on load.
#[derive(Debug)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, (String, Usage)>>,
    writer: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self { entries: RwLock::new(HashMap::new()), writer: None, path: None }
    }

    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let err = |e: std::io::Error| LlmError::Cache(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(err)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path).map_err(err)?).lines() {
                let line = line.map_err(err)?;
                if let Ok(c) = serde_json::from_str::<CacheLine>(&line) {
                    entries.insert(c.request_key, (c.text, c.usage));
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        // Terminate a torn last line so the next append starts clean.
        let raw = fs::read(path).map_err(err)?;
        if raw.last().is_some_and(|&b| b != b'\n') {
            file.write_all(b"\n").map_err(err)?;
        }
        Ok(Self { entries: RwLock::new(entries), writer: Some(Mutex::new(file)), path: Some(path.to_path_buf()) })
    }

    pub fn get(&self, key: &str) -> Option<(String, Usage)> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn put(&self, key: &str, text: &str, usage: Usage) -> Result<(), LlmError> {
        if let Some(w) = &self.writer {
            let mut line = serde_json::to_string(&CacheLine { request_key: key.to_string(), text: text.to_string(), usage })
                .map_err(|e| LlmError::Cache(e.to_string()))?;
            line.push('\n');
            let mut f = w.lock().expect("cache writer lock");
            f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| LlmError::Cache(e.to_string()))?;
        }
        self.entries.write().expect("cache lock").insert(key.to_string(), (text.to_string(), usage));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        let c = ResponseCache::open(&path).unwrap();
        c.put("k1", "hello", Usage::default()).unwrap();
        drop(c);
        // simulate a torn write
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"request_key\":\"k2\",\"te").unwrap();
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get("k1").unwrap().0, "hello");
        assert!(c.get("k2").is_none());
        c.put("k3", "after", Usage::default()).unwrap();
        drop(c);
        assert_eq!(ResponseCache::open(&path).unwrap().get("k3").unwrap().0, "after");
    }
}
