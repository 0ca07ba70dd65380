//! HTTP routes and per-session bookkeeping.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use asu_core::manager::Speaker;
use asu_core::{ActionScorer, DialogueSystem, Ontology, RelevanceModel, Session, VenueDb};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard};

use crate::error::ServiceError;
use crate::record::{
    Entry, Questionnaire, ScoreEntry, SessionRecord, Summary, Task, TurnDebug, LIKERT_ITEMS, LIKERT_MAX, QUESTIONNAIRE,
    TASKS_PER_SESSION,
};
use crate::store::{to_jsonl, Event, Store};
use crate::tasks::generate_tasks;

pub const DEFAULT_MODEL: &str = "default";
pub const DEFAULT_TASK_SET: &str = "default";
const TOP_SCORES: usize = 5;

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Startup options (mirrors the `serve` command-line flags).
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// `(model id, path)`; the first model is also available as `default`.
    pub models: Vec<(String, PathBuf)>,
    pub ontology: Option<PathBuf>,
    pub venues: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub host: String,
    pub port: u16,
    pub debug_scores: bool,
    pub task_seed: u64,
}

struct Live {
    /// `None` once closed, or when the log could not be replayed.
    session: Option<Session>,
    record: SessionRecord,
}

pub struct App {
    store: Store,
    ontology: Arc<Ontology>,
    db: Arc<VenueDb>,
    models: BTreeMap<String, Arc<dyn ActionScorer>>,
    task_sets: BTreeMap<String, Vec<Task>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Live>>>>,
    debug_scores: bool,
}

impl App {
    pub fn new(
        ontology: Arc<Ontology>,
        db: Arc<VenueDb>,
        models: BTreeMap<String, Arc<dyn ActionScorer>>,
        store: Store,
        debug_scores: bool,
        task_seed: u64,
    ) -> Result<Self, ServiceError> {
        let tasks = generate_tasks(&ontology, &db, task_seed)?;
        let app = App {
            store,
            ontology,
            db,
            models,
            task_sets: BTreeMap::from([(DEFAULT_TASK_SET.to_string(), tasks)]),
            sessions: RwLock::new(HashMap::new()),
            debug_scores,
        };
        app.restore()?;
        Ok(app)
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let ontology = Arc::new(match &config.ontology {
            Some(p) => Ontology::load(p)?,
            None => Ontology::cambridge(),
        });
        let db = Arc::new(match &config.venues {
            Some(p) => VenueDb::load(p, &ontology)?,
            None => VenueDb::cambridge(&ontology),
        });
        let mut models: BTreeMap<String, Arc<dyn ActionScorer>> = BTreeMap::new();
        for (i, (id, path)) in config.models.iter().enumerate() {
            let model: Arc<dyn ActionScorer> = Arc::new(RelevanceModel::load(path)?);
            if i == 0 {
                models.insert(DEFAULT_MODEL.to_string(), model.clone());
            }
            models.insert(id.clone(), model);
        }
        if models.is_empty() {
            return Err(ServiceError::Invalid("at least one --model is required".into()));
        }
        App::new(ontology, db, models, Store::open(&config.data_dir)?, config.debug_scores, config.task_seed)
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }

    fn system(&self, model: &str) -> Result<DialogueSystem, ServiceError> {
        let scorer = self.models.get(model).ok_or_else(|| ServiceError::UnknownModel(model.to_string()))?;
        Ok(DialogueSystem::new(self.ontology.clone(), self.db.clone(), scorer.clone()))
    }

    /// Load every persisted session; open ones are rebuilt by replaying
    /// their user turns through the same model.
    fn restore(&self) -> Result<(), ServiceError> {
        let mut map = self.sessions.write().expect("session map poisoned");
        for record in self.store.load_all()? {
            let session = if record.is_closed() { None } else { self.replay(&record) };
            map.insert(record.session_id.clone(), Arc::new(Mutex::new(Live { session, record })));
        }
        Ok(())
    }

    fn replay(&self, record: &SessionRecord) -> Option<Session> {
        let mut session = Session::open(self.system(&record.model).ok()?, record.session_id.clone());
        for entry in record.transcript.iter().skip(1).filter(|e| e.speaker == Speaker::User) {
            session.step(&entry.text, None).ok()?;
        }
        let rebuilt = session.transcript();
        if rebuilt.len() != record.transcript.len() || rebuilt.iter().zip(&record.transcript).any(|(a, b)| a.text != b.text) {
            eprintln!("session {}: replay diverged from the log; session is read-only", record.session_id);
            return None;
        }
        for e in record.transcript.iter().filter(|e| e.error_flag) {
            session.flag(e.turn_idx).ok()?;
        }
        Some(session)
    }

    fn live(&self, id: &str) -> Result<Arc<Mutex<Live>>, ServiceError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn live_busy(&self, id: &str) -> Result<OwnedMutexGuard<Live>, ServiceError> {
        self.live(id)?.try_lock_owned().map_err(|_| ServiceError::Busy)
    }

    pub fn create(&self, req: CreateRequest) -> Result<CreateResponse, ServiceError> {
        let system = self.system(&req.model)?;
        let tasks = self.task_sets.get(&req.task_set).ok_or_else(|| ServiceError::UnknownTaskSet(req.task_set.clone()))?;
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::open(system, id.clone());
        let welcome = &session.transcript()[0];
        let created_at = now();
        let entry = Entry {
            turn_idx: 0,
            speaker: Speaker::System,
            text: welcome.text.clone(),
            timestamp: created_at.clone(),
            error_flag: false,
            debug: None,
        };
        let event = Event::Created {
            session_id: id.clone(),
            model: req.model.clone(),
            task_set: req.task_set.clone(),
            tasks: tasks.clone(),
            created_at: created_at.clone(),
            entries: vec![entry.clone()],
        };
        self.store.append(&id, &event)?;
        let record = SessionRecord {
            session_id: id.clone(),
            model: req.model,
            task_set: req.task_set,
            tasks: tasks.clone(),
            transcript: vec![entry],
            questionnaire: None,
            created_at,
            closed_at: None,
        };
        let response = CreateResponse { session_id: id.clone(), greeting: welcome.text.clone(), turn_idx: 0, tasks: tasks.clone() };
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, Arc::new(Mutex::new(Live { session: Some(session), record })));
        Ok(response)
    }

    fn take_turn(&self, mut guard: OwnedMutexGuard<Live>, text: &str) -> Result<UtteranceResponse, ServiceError> {
        let live = &mut *guard;
        let session = live.session.as_mut().ok_or(ServiceError::Closed)?;
        if text.trim().is_empty() {
            return Err(ServiceError::Invalid("empty utterance".into()));
        }
        let before = session.transcript().len();
        let flagged_before: Vec<bool> = session.transcript().iter().map(|e| e.error_flag).collect();
        let outcome = session.step(text, None)?;
        let transcript = session.transcript();
        let flags: Vec<usize> =
            (0..before).filter(|&i| transcript[i].error_flag && !flagged_before[i]).collect();
        let debug = outcome.update.as_ref().map(|u| {
            let mut ranked: Vec<&asu_core::ScoredAction> = u.scored.iter().collect();
            ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
            TurnDebug {
                executed: u.executed.iter().map(ToString::to_string).collect(),
                top_scores: ranked
                    .into_iter()
                    .take(TOP_SCORES)
                    .map(|s| ScoreEntry { action: s.action.to_string(), score: s.score })
                    .collect(),
            }
        });
        let timestamp = now();
        let entries = vec![
            Entry {
                turn_idx: before,
                speaker: Speaker::User,
                text: transcript[before].text.clone(),
                timestamp: timestamp.clone(),
                error_flag: false,
                debug: debug.clone(),
            },
            Entry {
                turn_idx: before + 1,
                speaker: Speaker::System,
                text: outcome.text.clone(),
                timestamp,
                error_flag: false,
                debug: None,
            },
        ];
        self.store.append(&live.record.session_id, &Event::Turn { entries: entries.clone(), flags: flags.clone() })?;
        live.record.transcript.extend(entries);
        for &i in &flags {
            live.record.transcript[i].error_flag = true;
        }
        Ok(UtteranceResponse {
            user_turn_idx: before,
            turn_idx: before + 1,
            reply: outcome.text,
            flagged_turn_idx: flags.first().copied(),
            debug: if self.debug_scores { debug } else { None },
        })
    }

    fn flag(&self, mut guard: OwnedMutexGuard<Live>, turn_idx: usize) -> Result<Entry, ServiceError> {
        let live = &mut *guard;
        let session = live.session.as_mut().ok_or(ServiceError::Closed)?;
        session.flag(turn_idx).map_err(|e| ServiceError::Invalid(e.to_string()))?;
        self.store.append(&live.record.session_id, &Event::Flag { turn_idx, timestamp: now() })?;
        let entry = &mut live.record.transcript[turn_idx];
        entry.error_flag = true;
        Ok(entry.clone())
    }

    fn questionnaire(&self, mut guard: OwnedMutexGuard<Live>, answers: Vec<u8>) -> Result<SessionRecord, ServiceError> {
        let live = &mut *guard;
        if live.record.questionnaire.is_some() {
            return Err(ServiceError::AlreadySubmitted);
        }
        Questionnaire::validate(&answers)?;
        let submitted_at = now();
        self.store.append(
            &live.record.session_id,
            &Event::Questionnaire { answers: answers.clone(), submitted_at: submitted_at.clone() },
        )?;
        live.record.questionnaire = Some(Questionnaire { answers, submitted_at: submitted_at.clone() });
        live.record.closed_at = Some(submitted_at);
        if let Some(mut session) = live.session.take() {
            session.close();
        }
        Ok(live.record.clone())
    }

    fn export(&self, filter: &ExportFilter) -> Result<Vec<SessionRecord>, ServiceError> {
        Ok(self
            .store
            .load_all()?
            .into_iter()
            .filter(|r| filter.closed.is_none_or(|c| r.is_closed() == c))
            .filter(|r| filter.model.as_ref().is_none_or(|m| &r.model == m))
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_task_set")]
    pub task_set: String,
}

fn default_model() -> String {
    DEFAULT_MODEL.into()
}

fn default_task_set() -> String {
    DEFAULT_TASK_SET.into()
}

impl Default for CreateRequest {
    fn default() -> Self {
        CreateRequest { model: default_model(), task_set: default_task_set() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub greeting: String,
    pub turn_idx: usize,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceResponse {
    pub user_turn_idx: usize,
    /// Transcript index of the reply (pass it to the error-flag endpoint).
    pub turn_idx: usize,
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged_turn_idx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug: Option<TurnDebug>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlagRequest {
    pub turn_idx: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionnaireRequest {
    pub answers: Vec<u8>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExportFilter {
    pub closed: Option<bool>,
    pub model: Option<String>,
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid(format!("bad request body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Storage(format!("worker failed: {e}")))?
}

async fn create(State(app): State<Arc<App>>, body: Bytes) -> Result<impl IntoResponse, ServiceError> {
    let req = if body.iter().all(u8::is_ascii_whitespace) { CreateRequest::default() } else { parse(&body)? };
    let response = blocking(move || app.create(req)).await?;
    Ok((StatusCode::CREATED, Json(response)))
}

async fn utterance(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<UtteranceResponse>, ServiceError> {
    let req: UtteranceRequest = parse(&body)?;
    let guard = app.live_busy(&id)?;
    Ok(Json(blocking(move || app.take_turn(guard, &req.text)).await?))
}

async fn error_flag(State(app): State<Arc<App>>, Path(id): Path<String>, body: Bytes) -> Result<Json<Entry>, ServiceError> {
    let req: FlagRequest = parse(&body)?;
    let guard = app.live_busy(&id)?;
    Ok(Json(blocking(move || app.flag(guard, req.turn_idx)).await?))
}

async fn questionnaire(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionRecord>, ServiceError> {
    let req: QuestionnaireRequest = parse(&body)?;
    let guard = app.live_busy(&id)?;
    Ok(Json(blocking(move || app.questionnaire(guard, req.answers)).await?))
}

async fn get_session(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Json<SessionRecord>, ServiceError> {
    let live = app.live(&id)?;
    let record = live.lock().await.record.clone();
    Ok(Json(record))
}

async fn export(State(app): State<Arc<App>>, Query(filter): Query<ExportFilter>) -> Result<impl IntoResponse, ServiceError> {
    let records = blocking(move || app.export(&filter)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], to_jsonl(&records)))
}

async fn summary(State(app): State<Arc<App>>, Query(filter): Query<ExportFilter>) -> Result<Json<Summary>, ServiceError> {
    let records = blocking(move || app.export(&filter)).await?;
    Ok(Json(Summary::of(&records)))
}

async fn questionnaire_items() -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "statements": QUESTIONNAIRE,
        "likert_items": LIKERT_ITEMS,
        "likert_max": LIKERT_MAX,
        "max_tasks": TASKS_PER_SESSION,
    }))
}

async fn health(State(app): State<Arc<App>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "models": app.model_ids() }))
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/questionnaire", get(questionnaire_items))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/utterances", post(utterance))
        .route("/sessions/{id}/error-flags", post(error_flag))
        .route("/sessions/{id}/questionnaire", post(questionnaire))
        .route("/export", get(export))
        .route("/export/summary", get(summary))
        .with_state(app)
}

/// Serve until the listener fails or the process receives Ctrl-C.
pub async fn serve(app: Arc<App>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
