use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use asu_core::corpus::{import_dstc2, AnnotatedCorpus};
use asu_core::datagen::{
    audit_ext_a, gen_baseline, gen_ext_a, gen_ext_h, ActiveLearningConfig, BaselineConfig, Dataset, ExtHConfig,
};
use asu_core::eval::{corpus_eval, records_to_corpus, run_simulation, ReplayMode, SimulationSetup};
use asu_core::io::write_jsonl;
use asu_core::scorer::{ConstantScorer, Lexicon, TrainConfig};
use asu_core::simulator::{SimulatorConfig, SurfaceBank};
use asu_core::{ActionScorer, AsuError, DialogueSystem, Ontology, OracleScorer, RelevanceModel, Session, VenueDb};
use asu_service::{App, ServiceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::{Cli, Command, Datagen, ServeArgs, SimArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<AsuError> for CliError {
    fn from(e: AsuError) -> Self {
        match e {
            AsuError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<asu_service::ServiceError> for CliError {
    fn from(e: asu_service::ServiceError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{} does not exist or is not a file", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{} does not exist or is not a directory", path.display())))
    }
}

struct World {
    ontology: Arc<Ontology>,
    db: Arc<VenueDb>,
}

fn world(cli: &Cli) -> Result<World> {
    for p in cli.ontology.iter().chain(&cli.venues) {
        require_file(p)?;
    }
    let ontology = Arc::new(match &cli.ontology {
        Some(p) => Ontology::load(p)?,
        None => Ontology::cambridge(),
    });
    let db = Arc::new(match &cli.venues {
        Some(p) => VenueDb::load(p, &ontology)?,
        None => VenueDb::cambridge(&ontology),
    });
    Ok(World { ontology, db })
}

fn load_corpus(path: &Path, ontology: &Ontology) -> Result<AnnotatedCorpus> {
    require_file(path)?;
    let corpus = AnnotatedCorpus::load(path)?;
    corpus.validate(ontology)?;
    Ok(corpus)
}

fn load_dataset(dir: &Path, stem: &str) -> Result<Dataset> {
    require_file(&dir.join(format!("{stem}.train.jsonl")))?;
    Ok(Dataset::load(dir, stem)?)
}

/// `oracle`, `zero`, or a model path.
fn scorer(spec: &str) -> Result<Arc<dyn ActionScorer>> {
    Ok(match spec {
        "oracle" => Arc::new(OracleScorer),
        "zero" => Arc::new(ConstantScorer(0.0)),
        path => {
            let path = Path::new(path);
            require_file(path)?;
            Arc::new(RelevanceModel::load(path)?)
        }
    })
}

fn bank(sim: &SimArgs, ontology: &Ontology) -> Result<SurfaceBank> {
    match &sim.corpus {
        Some(p) => Ok(SurfaceBank::with_corpus(ontology, &load_corpus(p, ontology)?)),
        None => Ok(SurfaceBank::builtin(ontology)),
    }
}

fn unit_interval(name: &str, x: f64) -> Result<()> {
    if (0.0..1.0).contains(&x) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must lie in [0, 1), got {x}")))
    }
}

pub fn run(cli: Cli) -> Result<Value> {
    let w = world(&cli)?;
    match cli.command {
        Command::IngestDstc2 { logs, out } => {
            require_dir(&logs)?;
            let (corpus, report) = import_dstc2(&logs, &w.ontology, &w.db)?;
            corpus.save(&out)?;
            Ok(json!({ "command": "ingest-dstc2", "report": report, "output": out }))
        }
        Command::Datagen(d) => datagen(d, &w),
        Command::Train { data_dir, dataset, out, epochs, learning_rate, l2, seed } => {
            if epochs == 0 || learning_rate <= 0.0 || l2 < 0.0 {
                return Err(CliError::Config("need epochs > 0, learning rate > 0 and l2 >= 0".into()));
            }
            let ds = load_dataset(&data_dir, &dataset)?;
            let config = TrainConfig { epochs, learning_rate, l2, seed, ..TrainConfig::default() };
            let model = RelevanceModel::train(&ds.train, Lexicon::from_ontology(&w.ontology), &config)?;
            model.save(&out)?;
            let dev_accuracy = if ds.dev.is_empty() {
                None
            } else {
                let scores = model.score_batch(ds.dev.iter().map(|e| &e.input));
                let right = scores.iter().zip(&ds.dev).filter(|(s, e)| (**s > 0.5) == e.label).count();
                Some(right as f64 / ds.dev.len() as f64)
            };
            Ok(json!({ "command": "train", "report": model.report(), "dev_accuracy": dev_accuracy, "output": out }))
        }
        Command::Simulate { scorer: spec, dialogues, seed, sim, records } => {
            if dialogues == 0 {
                return Err(CliError::Config("--dialogues must be positive".into()));
            }
            let bank = bank(&sim, &w.ontology)?;
            let setup = SimulationSetup {
                system: DialogueSystem::new(w.ontology.clone(), w.db.clone(), scorer(&spec)?),
                bank: &bank,
                config: if sim.corpus_style { SimulatorConfig::corpus_style() } else { SimulatorConfig::default() },
            };
            let (metrics, recs) = run_simulation(&setup, dialogues, seed)?;
            if let Some(path) = &records {
                write_jsonl(path, &recs)?;
            }
            Ok(json!({ "command": "simulate", "scorer": spec, "seed": seed, "metrics": metrics, "records": records }))
        }
        Command::EvalCorpus { corpus, scorer: spec, mode } => {
            let corpus = load_corpus(&corpus, &w.ontology)?;
            let mode = if mode == "live" { ReplayMode::Live } else { ReplayMode::Gold };
            let system = DialogueSystem::new(w.ontology.clone(), w.db.clone(), scorer(&spec)?);
            let metrics = corpus_eval(system.scorer.as_ref(), &corpus, &w.ontology, Some(&system), mode)?;
            Ok(json!({ "command": "eval-corpus", "scorer": spec, "mode": mode, "metrics": metrics }))
        }
        Command::Serve(args) => serve(args, &cli.ontology, &cli.venues),
        Command::Chat { model } => chat(&w, &model),
    }
}

fn datagen(d: Datagen, w: &World) -> Result<Value> {
    match d {
        Datagen::Corpus { dialogues, seed, out } => {
            if dialogues == 0 {
                return Err(CliError::Config("--dialogues must be positive".into()));
            }
            let bank = SurfaceBank::builtin(&w.ontology);
            let setup = SimulationSetup {
                system: DialogueSystem::new(w.ontology.clone(), w.db.clone(), Arc::new(OracleScorer)),
                bank: &bank,
                config: SimulatorConfig::corpus_style(),
            };
            let (metrics, records) = run_simulation(&setup, dialogues, seed)?;
            let corpus = records_to_corpus(&records);
            corpus.save(&out)?;
            Ok(json!({
                "command": "datagen corpus",
                "dialogues": dialogues,
                "turns": corpus.turns.len(),
                "actions": corpus.action_count(),
                "success_rate": metrics.success_rate,
                "output": out,
            }))
        }
        Datagen::Baseline { corpus, out_dir, negatives, dev_fraction, seed } => {
            unit_interval("--dev-fraction", dev_fraction)?;
            let corpus = load_corpus(&corpus, &w.ontology)?;
            let config = BaselineConfig { negatives_per_positive: negatives, dev_fraction, ..Default::default() };
            let ds = gen_baseline(&corpus, &w.ontology, &config, &mut ChaCha8Rng::seed_from_u64(seed))?;
            ds.save(&out_dir, "baseline")?;
            Ok(json!({ "command": "datagen baseline", "stats": ds.stats, "output": out_dir.join("baseline") }))
        }
        Datagen::ExtH { corpus, baseline_dir, out_dir, train, dev, negatives, seed } => {
            let corpus = load_corpus(&corpus, &w.ontology)?;
            let baseline = load_dataset(&baseline_dir, "baseline")?;
            let bank = SurfaceBank::with_corpus(&w.ontology, &corpus);
            let config = ExtHConfig { n_train: train, n_dev: dev, negatives_per_positive: negatives, ..Default::default() };
            let ds = gen_ext_h(&baseline, &corpus, &w.ontology, &w.db, &bank, &config, &mut ChaCha8Rng::seed_from_u64(seed))?;
            ds.save(&out_dir, "ext_h")?;
            Ok(json!({ "command": "datagen ext-h", "stats": ds.stats, "output": out_dir.join("ext_h") }))
        }
        Datagen::ExtA { corpus, baseline_dir, model, out_dir, dialogues, t1, t2, m, dev_fraction, seed } => {
            let config = ActiveLearningConfig { t1, t2, m, n_dialogues: dialogues, dev_fraction, seed };
            config.validate()?;
            let corpus = load_corpus(&corpus, &w.ontology)?;
            let baseline = load_dataset(&baseline_dir, "baseline")?;
            require_file(&model)?;
            let model = Arc::new(RelevanceModel::load(&model)?);
            let bank = SurfaceBank::with_corpus(&w.ontology, &corpus);
            let setup = SimulationSetup {
                system: DialogueSystem::new(w.ontology.clone(), w.db.clone(), model.clone() as Arc<dyn ActionScorer>),
                bank: &bank,
                config: SimulatorConfig::default(),
            };
            let ds = gen_ext_a(&baseline, Some(&model), &setup, &config)?;
            ds.save(&out_dir, "ext_a")?;
            let audit = audit_ext_a(&ds, &model, &config);
            Ok(json!({
                "command": "datagen ext-a",
                "stats": ds.stats,
                "audit": audit,
                "audit_passes": audit.passes(&config),
                "output": out_dir.join("ext_a"),
            }))
        }
    }
}

fn parse_model_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((id, path)) if !id.is_empty() => (id.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            (id, path)
        }
    }
}

fn serve(args: ServeArgs, ontology: &Option<PathBuf>, venues: &Option<PathBuf>) -> Result<Value> {
    let models: Vec<(String, PathBuf)> = args.model.iter().map(|m| parse_model_arg(m)).collect();
    for (_, p) in &models {
        require_file(p)?;
    }
    let config = ServiceConfig {
        models,
        ontology: ontology.clone(),
        venues: venues.clone(),
        data_dir: args.data_dir.clone(),
        host: args.host.clone(),
        port: args.port,
        debug_scores: args.debug_scores,
        task_seed: args.task_seed,
    };
    let app = Arc::new(App::from_config(&config)?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port))
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {}:{}: {e}", config.host, config.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        let started = json!({ "command": "serve", "address": format!("http://{addr}"), "models": app.model_ids(), "data_dir": config.data_dir });
        let _ = writeln!(std::io::stdout(), "{started}");
        let _ = std::io::stdout().flush();
        asu_service::serve(app, listener).await.map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(json!({ "command": "serve", "stopped": true }))
    })
}

fn chat(w: &World, model: &Path) -> Result<Value> {
    require_file(model)?;
    let scorer: Arc<dyn ActionScorer> = Arc::new(RelevanceModel::load(model)?);
    let mut session = Session::open(DialogueSystem::new(w.ontology.clone(), w.db.clone(), scorer), "chat");
    let mut out = std::io::stderr();
    let _ = writeln!(out, "system: {}", session.transcript()[0].text);
    let mut turns = 0;
    for line in std::io::stdin().lock().lines() {
        let line = line.map_err(|e| CliError::Runtime(e.to_string()))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if matches!(text, "quit" | "exit") {
            break;
        }
        let outcome = session.step(text, None)?;
        turns += 1;
        if let Some(update) = &outcome.update {
            let executed: Vec<String> = update.executed.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "  [{}]", executed.join(", "));
        }
        let _ = writeln!(out, "system: {}", outcome.text);
    }
    let flagged = session.transcript().iter().filter(|e| e.error_flag).count();
    Ok(json!({ "command": "chat", "turns": turns, "flagged": flagged }))
}
