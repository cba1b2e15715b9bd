//! Append-only storage for session logs.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use crate::error::{Result, ServiceError};
use crate::events::LogEntry;

pub trait EventStore: Send + Sync {
    fn append(&self, session_id: &str, entry: &LogEntry) -> Result<()>;
    fn load(&self, session_id: &str) -> Result<Vec<LogEntry>>;
    fn session_ids(&self) -> Result<Vec<String>>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    logs: Mutex<BTreeMap<String, Vec<LogEntry>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl EventStore for MemoryStore {
    fn append(&self, session_id: &str, entry: &LogEntry) -> Result<()> {
        self.logs.lock().entry(session_id.to_string()).or_default().push(entry.clone());
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<Vec<LogEntry>> {
        self.logs
            .lock()
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no log for session {session_id}")))
    }

    fn session_ids(&self) -> Result<Vec<String>> {
        Ok(self.logs.lock().keys().cloned().collect())
    }
}

/// One JSON-lines file per session, `<dir>/<session_id>.jsonl`.
#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, write_lock: Mutex::new(()) })
    }

    pub fn path_of(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }
}

impl EventStore for FileStore {
    fn append(&self, session_id: &str, entry: &LogEntry) -> Result<()> {
        let _guard = self.write_lock.lock();
        let mut line = serde_json::to_string(entry)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.path_of(session_id))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<Vec<LogEntry>> {
        let path = self.path_of(session_id);
        if !path.exists() {
            return Err(ServiceError::NotFound(format!("no log for session {session_id}")));
        }
        read_log(&path)
    }

    fn session_ids(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem() {
                    ids.push(stem.to_string_lossy().into_owned());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

/// Reads a log file. A torn final line (crash mid-append) is dropped.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogEntry>> {
    let path = path.as_ref();
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("{}: dropping torn final entry: {e}", path.display());
            }
            Err(e) => return Err(ServiceError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}
