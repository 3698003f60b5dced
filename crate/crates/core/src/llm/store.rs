use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::CompletionResult;

/// One persisted line of the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub digest: String,
    pub result: CompletionResult,
}

/// Digest-keyed completions, optionally backed by an append-only JSONL file.
#[derive(Debug, Default)]
pub struct ReplayStore {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CompletionResult>>,
}

impl ReplayStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a store file. A missing file yields an empty store that will be
    /// created on first append. When a digest repeats, the first entry wins.
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: StoreEntry = serde_json::from_str(&line).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", path.display(), idx + 1),
                    )
                })?;
                entries.entry(entry.digest).or_insert(entry.result);
            }
        }
        Ok(Self {
            path: Some(path),
            entries: Mutex::new(entries),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, digest: &str) -> Option<CompletionResult> {
        self.entries.lock().unwrap().get(digest).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts and persists an entry. Appends are serialized by the entry lock,
    /// so concurrent recorders never interleave lines.
    pub fn insert(&self, digest: &str, result: &CompletionResult) -> std::io::Result<()> {
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(digest) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&StoreEntry {
                digest: digest.to_string(),
                result: result.clone(),
            })
            .expect("entry serializes");
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        entries.insert(digest.to_string(), result.clone());
        Ok(())
    }
}
