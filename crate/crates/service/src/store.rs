//! Append-only JSONL event logs, one file per session.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::record::{Entry, Questionnaire, SessionRecord, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        model: String,
        task_set: String,
        tasks: Vec<Task>,
        created_at: String,
        entries: Vec<Entry>,
    },
    /// One exchange; `flags` are entries flagged by an error marker in it.
    Turn {
        entries: Vec<Entry>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        flags: Vec<usize>,
    },
    Flag { turn_idx: usize, timestamp: String },
    Questionnaire { answers: Vec<u8>, submitted_at: String },
}

impl SessionRecord {
    fn apply(&mut self, event: Event) {
        match event {
            Event::Created { .. } => {}
            Event::Turn { entries, flags } => {
                self.transcript.extend(entries);
                for i in flags {
                    self.flag(i);
                }
            }
            Event::Flag { turn_idx, .. } => self.flag(turn_idx),
            Event::Questionnaire { answers, submitted_at } => {
                self.closed_at = Some(submitted_at.clone());
                self.questionnaire = Some(Questionnaire { answers, submitted_at });
            }
        }
    }

    fn flag(&mut self, turn_idx: usize) {
        if let Some(e) = self.transcript.get_mut(turn_idx) {
            e.error_flag = true;
        }
    }

    /// Events that rebuild this record.
    pub fn to_events(&self) -> Vec<Event> {
        let mut events = Vec::new();
        let mut entries = self.transcript.clone();
        let flagged: Vec<usize> = entries.iter().filter(|e| e.error_flag).map(|e| e.turn_idx).collect();
        for e in &mut entries {
            e.error_flag = false;
        }
        let rest = entries.split_off(1.min(entries.len()));
        events.push(Event::Created {
            session_id: self.session_id.clone(),
            model: self.model.clone(),
            task_set: self.task_set.clone(),
            tasks: self.tasks.clone(),
            created_at: self.created_at.clone(),
            entries,
        });
        if !rest.is_empty() {
            events.push(Event::Turn { entries: rest, flags: Vec::new() });
        }
        for turn_idx in flagged {
            events.push(Event::Flag { turn_idx, timestamp: self.created_at.clone() });
        }
        if let Some(q) = &self.questionnaire {
            events.push(Event::Questionnaire { answers: q.answers.clone(), submitted_at: q.submitted_at.clone() });
        }
        events
    }

    pub fn from_events(events: Vec<Event>) -> Option<Self> {
        let mut events = events.into_iter();
        let Some(Event::Created { session_id, model, task_set, tasks, created_at, entries }) = events.next() else {
            return None;
        };
        let mut record = SessionRecord {
            session_id,
            model,
            task_set,
            tasks,
            transcript: entries,
            questionnaire: None,
            created_at,
            closed_at: None,
        };
        for event in events {
            record.apply(event);
        }
        Some(record)
    }
}

/// Session logs under `<dir>/sessions/<id>.jsonl`.
#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

fn storage(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(format!("{}: {e}", path.display()))
}

impl Store {
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = data_dir.into().join("sessions");
        fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        Ok(Store { dir })
    }

    fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    /// Append one event as a single line and flush it to disk.
    pub fn append(&self, session_id: &str, event: &Event) -> Result<(), ServiceError> {
        let path = self.path(session_id);
        let mut line = serde_json::to_vec(event).map_err(|e| storage(&path, e))?;
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| storage(&path, e))?;
        file.write_all(&line).map_err(|e| storage(&path, e))?;
        file.sync_data().map_err(|e| storage(&path, e))
    }

    /// Read one session. A torn final line (crash mid-write) is ignored.
    pub fn load(&self, session_id: &str) -> Result<SessionRecord, ServiceError> {
        if session_id.is_empty() || !session_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(ServiceError::UnknownSession(session_id.to_string()));
        }
        let path = self.path(session_id);
        let file = File::open(&path).map_err(|_| ServiceError::UnknownSession(session_id.to_string()))?;
        let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(|e| storage(&path, e))?;
        let mut events = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str(line) {
                Ok(event) => events.push(event),
                Err(_) if i + 1 == lines.len() => break,
                Err(e) => return Err(storage(&path, format!("line {}: {e}", i + 1))),
            }
        }
        SessionRecord::from_events(events).ok_or_else(|| storage(&path, "missing creation event"))
    }

    pub fn session_ids(&self) -> Result<Vec<String>, ServiceError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|e| storage(&self.dir, e))? {
            let path = entry.map_err(|e| storage(&self.dir, e))?.path();
            if path.extension().is_some_and(|x| x == "jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Every record, ordered by creation time then id.
    pub fn load_all(&self) -> Result<Vec<SessionRecord>, ServiceError> {
        let mut records = self.session_ids()?.iter().map(|id| self.load(id)).collect::<Result<Vec<_>, _>>()?;
        records.sort_by(|a, b| (&a.created_at, &a.session_id).cmp(&(&b.created_at, &b.session_id)));
        Ok(records)
    }

    /// Write a record (e.g. from an export) as a fresh log.
    pub fn import(&self, record: &SessionRecord) -> Result<(), ServiceError> {
        let path = self.path(&record.session_id);
        if path.exists() {
            return Err(ServiceError::Invalid(format!("session {} already exists", record.session_id)));
        }
        for event in record.to_events() {
            self.append(&record.session_id, &event)?;
        }
        Ok(())
    }
}

pub fn to_jsonl(records: &[SessionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<SessionRecord>, ServiceError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ServiceError::Invalid(e.to_string())))
        .collect()
}
