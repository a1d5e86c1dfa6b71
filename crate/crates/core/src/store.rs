//! Append-only JSONL event logs, one file per session.
//!
//! Each line is one [`SessionEvent`] carrying `schema`, `seq`, `timestamp`,
//! `kind` and `payload`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::LogError;
use crate::session::{Session, SessionEvent, EVENT_SCHEMA_VERSION};

#[derive(Debug, Clone)]
pub struct EventStore {
    dir: PathBuf,
}

/// Session ids become file names, so only a safe alphabet is allowed.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub fn event_line(event: &SessionEvent) -> String {
    serde_json::to_string(event).expect("events serialize")
}

/// Parses a whole log. The first unreadable or out-of-order line is
/// reported as corrupt, identified by the seq it should have carried.
pub fn parse_log(text: &str) -> Result<Vec<SessionEvent>, LogError> {
    let mut events = Vec::new();
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let expected = i as u64 + 1;
        let corrupt = |reason: String| LogError::CorruptLog { seq: expected, reason };
        if !line.ends_with('\n') {
            return Err(corrupt("truncated line".into()));
        }
        let ev: SessionEvent = serde_json::from_str(line.trim_end()).map_err(|e| corrupt(e.to_string()))?;
        if ev.schema != EVENT_SCHEMA_VERSION {
            return Err(corrupt(format!("unsupported schema {}", ev.schema)));
        }
        if ev.seq != expected {
            return Err(corrupt(format!("found seq {}", ev.seq)));
        }
        events.push(ev);
    }
    Ok(events)
}

impl EventStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LogError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    fn checked_path(&self, id: &str) -> Result<PathBuf, LogError> {
        if valid_session_id(id) {
            Ok(self.path(id))
        } else {
            Err(LogError::NoSuchSession(id.to_string()))
        }
    }

    /// Appends events and syncs them to disk before returning.
    pub fn append(&self, id: &str, events: &[SessionEvent]) -> Result<(), LogError> {
        if events.is_empty() {
            return Ok(());
        }
        let path = self.checked_path(id)?;
        let mut buf = String::new();
        for ev in events {
            buf.push_str(&event_line(ev));
            buf.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(buf.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    /// Writes the events of `session` not yet on disk, given how many are.
    pub fn sync(&self, session: &Session, persisted: usize) -> Result<usize, LogError> {
        self.append(session.id(), &session.events[persisted.min(session.events.len())..])?;
        Ok(session.events.len())
    }

    pub fn load(&self, id: &str) -> Result<Vec<SessionEvent>, LogError> {
        let path = self.checked_path(id)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(LogError::NoSuchSession(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let events = parse_log(&text)?;
        if events.is_empty() {
            return Err(LogError::NoSuchSession(id.to_string()));
        }
        Ok(events)
    }

    pub fn replay(&self, id: &str) -> Result<Session, LogError> {
        Session::from_events(self.load(id)?).map_err(|e| match e {
            LogError::NoSuchSession(_) => LogError::NoSuchSession(id.to_string()),
            other => other,
        })
    }

    /// Loads a session after a crash: a torn final line (no newline) is cut
    /// off the file. Any other damage is still an error.
    pub fn recover(&self, id: &str) -> Result<Session, LogError> {
        let path = self.checked_path(id)?;
        let text = fs::read_to_string(&path)?;
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            log::warn!("session {id}: dropping torn final log line");
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(keep as u64)?;
            f.sync_data()?;
        }
        self.replay(id)
    }

    /// Ids of every log in the directory, sorted.
    pub fn list(&self) -> Result<Vec<String>, LogError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if valid_session_id(stem) {
                        ids.push(stem.to_string());
                    }
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

/// Reads a log file from any path.
pub fn read_log_file(path: &Path) -> Result<Vec<SessionEvent>, LogError> {
    parse_log(&fs::read_to_string(path)?)
}
