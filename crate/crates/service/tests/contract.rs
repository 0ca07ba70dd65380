use std::collections::BTreeMap;
use std::sync::Arc;

use asu_core::datagen::{gen_baseline, BaselineConfig};
use asu_core::eval::{records_to_corpus, run_simulation, SimulationSetup};
use asu_core::scorer::{Lexicon, TrainConfig};
use asu_core::simulator::{SimulatorConfig, SurfaceBank};
use asu_core::{ActionScorer, DialogueSystem, Ontology, OracleScorer, RelevanceModel, VenueDb};
use asu_service::record::Task;
use asu_service::store::parse_jsonl;
use asu_service::{App, Store, Summary, QUESTIONNAIRE, SESSION_RECORD_SCHEMA};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn trained_model(ontology: &Arc<Ontology>, db: &Arc<VenueDb>) -> Arc<dyn ActionScorer> {
    let bank = SurfaceBank::builtin(ontology);
    let setup = SimulationSetup {
        system: DialogueSystem::new(ontology.clone(), db.clone(), Arc::new(OracleScorer)),
        bank: &bank,
        config: SimulatorConfig::corpus_style(),
    };
    let (_, records) = run_simulation(&setup, 200, 3).unwrap();
    let corpus = records_to_corpus(&records);
    let ds = gen_baseline(&corpus, ontology, &BaselineConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    Arc::new(RelevanceModel::train(&ds.train, Lexicon::from_ontology(ontology), &TrainConfig::default()).unwrap())
}

fn app(dir: &std::path::Path, model: Arc<dyn ActionScorer>) -> Arc<App> {
    let ontology = Arc::new(Ontology::cambridge());
    let db = Arc::new(VenueDb::cambridge(&ontology));
    let models = BTreeMap::from([("default".to_string(), model.clone()), ("baseline".to_string(), model)]);
    Arc::new(App::new(ontology, db, models, Store::open(dir).unwrap(), true, 0).unwrap())
}

async fn start(app: Arc<App>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(asu_service::serve(app, listener));
    format!("http://{addr}")
}

struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn get_text(&self, path: &str) -> String {
        self.http.get(format!("{}{path}", self.base)).send().await.unwrap().text().await.unwrap()
    }

    async fn get(&self, path: &str) -> Value {
        serde_json::from_str(&self.get_text(path).await).unwrap()
    }
}

fn task_utterances(task: &Task) -> Vec<String> {
    let mut parts = Vec::new();
    if let Some(p) = task.initial.get("pricerange") {
        parts.push(format!("{p} restaurant"));
    }
    if let Some(f) = task.initial.get("food") {
        parts.push(format!("serving {f} food"));
    }
    if let Some(a) = task.initial.get("area") {
        parts.push(format!("in the {a} of town"));
    }
    let mut out = vec![format!("i am looking for a {}", parts.join(" "))];
    for c in &task.changes {
        out.push(match c.slot.as_str() {
            "food" => format!("how about {} food", c.value),
            "area" => format!("what about the {} of town", c.value),
            _ => format!("i want a {} restaurant instead", c.value),
        });
    }
    out.push("what is the phone number".into());
    out
}

fn validate(records: &[Value]) {
    let schema: Value = serde_json::from_str(SESSION_RECORD_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for r in records {
        let errors: Vec<String> = validator.iter_errors(r).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_five_task_session() {
    let ontology = Arc::new(Ontology::cambridge());
    let db = Arc::new(VenueDb::cambridge(&ontology));
    let model = trained_model(&ontology, &db);
    let dir = tempfile::tempdir().unwrap();
    let c = Client { http: reqwest::Client::new(), base: start(app(dir.path(), model.clone())).await };

    let (status, created) = c.post("/sessions", json!({ "model": "default" })).await;
    assert_eq!(status, 201);
    let id = created["session_id"].as_str().unwrap().to_string();
    let tasks: Vec<Task> = serde_json::from_value(created["tasks"].clone()).unwrap();
    assert_eq!(tasks.len(), 5);
    assert!(!created["greeting"].as_str().unwrap().is_empty());

    let mut user_turns = 0;
    let mut flagged = Vec::new();
    for (t, task) in tasks.iter().enumerate() {
        for (k, text) in task_utterances(task).iter().enumerate() {
            let (status, reply) = c.post(&format!("/sessions/{id}/utterances"), json!({ "text": text })).await;
            assert_eq!(status, 200, "{reply}");
            user_turns += 1;
            assert!(reply["debug"]["top_scores"].as_array().unwrap().len() <= 5);
            // One flag through the API and one through the error marker.
            if t == 1 && k == 0 {
                let turn_idx = reply["turn_idx"].as_u64().unwrap();
                let (status, entry) = c.post(&format!("/sessions/{id}/error-flags"), json!({ "turn_idx": turn_idx })).await;
                assert_eq!((status, entry["error_flag"].as_bool()), (200, Some(true)));
                flagged.push(turn_idx);
            }
            if t == 3 && k == 1 {
                let (status, ack) = c.post(&format!("/sessions/{id}/utterances"), json!({ "text": "<error>" })).await;
                assert_eq!(status, 200);
                assert_eq!(ack["flagged_turn_idx"], reply["turn_idx"]);
                flagged.push(reply["turn_idx"].as_u64().unwrap());
            }
        }
    }
    // A user turn cannot be flagged.
    let (status, _) = c.post(&format!("/sessions/{id}/error-flags"), json!({ "turn_idx": 1 })).await;
    assert_eq!(status, 422);

    let (status, record) = c.post(&format!("/sessions/{id}/questionnaire"), json!({ "answers": [5, 4, 6, 5, 4, 4] })).await;
    assert_eq!(status, 200);
    assert_eq!(record["questionnaire"]["answers"], json!([5, 4, 6, 5, 4, 4]));
    assert!(record["closed_at"].is_string());
    let (status, _) = c.post(&format!("/sessions/{id}/questionnaire"), json!({ "answers": [5, 4, 6, 5, 4, 4] })).await;
    assert_eq!(status, 409);
    let (status, body) = c.post(&format!("/sessions/{id}/utterances"), json!({ "text": "hello" })).await;
    assert_eq!((status, body["error"].as_str()), (409, Some("session_closed")));

    // Export: every reply is persisted, the record validates, the aggregate matches the count above.
    let export = c.get_text("/export").await;
    let rows: Vec<Value> = export.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 1);
    validate(&rows);
    assert_eq!(rows[0], c.get(&format!("/sessions/{id}")).await);
    let records = parse_jsonl(&export).unwrap();
    let marked: Vec<u64> = records[0].transcript.iter().filter(|e| e.error_flag).map(|e| e.turn_idx as u64).collect();
    assert_eq!(marked, flagged);
    let summary: Summary = serde_json::from_value(c.get("/export/summary").await).unwrap();
    assert_eq!(summary.turns, user_turns);
    assert_eq!(summary.flagged_turns, 2);
    assert_eq!(summary.error_rate, 2.0 / user_turns as f64);
    assert_eq!(summary.questionnaire[0].statement, QUESTIONNAIRE[0]);
    assert_eq!(summary.questionnaire[5].mean, Some(4.0));
}

#[tokio::test(flavor = "multi_thread")]
async fn request_errors_and_restart() {
    let ontology = Arc::new(Ontology::cambridge());
    let db = Arc::new(VenueDb::cambridge(&ontology));
    let model = trained_model(&ontology, &db);
    let dir = tempfile::tempdir().unwrap();
    let c = Client { http: reqwest::Client::new(), base: start(app(dir.path(), model.clone())).await };

    let (status, body) = c.post("/sessions", json!({ "model": "nope" })).await;
    assert_eq!((status, body["error"].as_str()), (400, Some("unknown_model")));
    let (_, a) = c.post("/sessions", json!({})).await;
    let (_, b) = c.post("/sessions", json!({ "model": "baseline" })).await;
    assert_ne!(a["session_id"], b["session_id"]);
    let id = a["session_id"].as_str().unwrap();

    let (status, body) = c.post("/sessions/not-a-session/utterances", json!({ "text": "hi" })).await;
    assert_eq!((status, body["error"].as_str()), (404, Some("unknown_session")));
    let (status, _) = c.post(&format!("/sessions/{id}/utterances"), json!({ "wrong": 1 })).await;
    assert_eq!(status, 422);
    let (status, _) = c.post(&format!("/sessions/{id}/questionnaire"), json!({ "answers": [7, 5, 5, 5, 5, 5] })).await;
    assert_eq!(status, 422);

    let (status, reply) = c.post(&format!("/sessions/{id}/utterances"), json!({ "text": "cheap italian restaurant" })).await;
    assert_eq!(status, 200);
    let reply_text = reply["reply"].as_str().unwrap().to_string();
    assert!(reply_text.contains("is a"), "expected an offer, got {reply_text:?}");
    let (_, _) = c.post(&format!("/sessions/{id}/utterances"), json!({ "text": "<error>" })).await;
    let before = c.get(&format!("/sessions/{id}")).await;

    // A second service on the same data directory picks the session up.
    let c2 = Client { http: reqwest::Client::new(), base: start(app(dir.path(), model)).await };
    assert_eq!(c2.get(&format!("/sessions/{id}")).await, before);
    let (status, _) = c2.post(&format!("/sessions/{id}/utterances"), json!({ "text": "what is the address" })).await;
    assert_eq!(status, 200);
    let after = c2.get(&format!("/sessions/{id}")).await;
    assert_eq!(after["transcript"].as_array().unwrap().len(), before["transcript"].as_array().unwrap().len() + 2);
    let all = c2.get_text("/export").await;
    validate(&all.lines().map(|l| serde_json::from_str(l).unwrap()).collect::<Vec<Value>>());
    let s: Summary = serde_json::from_value(c2.get("/export/summary?closed=true").await).unwrap();
    assert_eq!((s.sessions, s.turns), (0, 0));
}
