//! Dialogue sessions over HTTP, persisted as append-only JSONL logs.
//!
//! Routes: `POST /sessions`, `POST /sessions/{id}/utterances`,
//! `POST /sessions/{id}/error-flags`, `POST /sessions/{id}/questionnaire`,
//! `GET /sessions/{id}`, `GET /export` (JSONL) and `GET /export/summary`.

pub mod app;
pub mod error;
pub mod record;
pub mod store;
pub mod tasks;

pub use app::{router, serve, App, ServiceConfig};
pub use error::ServiceError;
pub use record::{SessionRecord, Summary, QUESTIONNAIRE};
pub use store::Store;

/// JSON Schema for one exported session record.
pub const SESSION_RECORD_SCHEMA: &str = include_str!("../schema/session_record.schema.json");
