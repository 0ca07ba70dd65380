//! `import asu`: candidate generation, trained scorers, tracking sessions
//! and simulation from Python.

use std::sync::Arc;

use asu_core::datagen::{gen_baseline, BaselineConfig};
use asu_core::eval::{records_to_corpus, run_simulation, SimulationSetup};
use asu_core::scorer::{ConstantScorer, Lexicon, TrainConfig};
use asu_core::simulator::{SimulatorConfig, SurfaceBank};
use asu_core::{
    candidate_count as count, ActionScorer, AsuError, CandidateConfig, DialogueSystem, Ontology, OracleScorer,
    RelevanceModel, ScorerInput, Session, VenueDb,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: AsuError) -> PyErr {
    match e {
        AsuError::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn world() -> (Arc<Ontology>, Arc<VenueDb>) {
    let ontology = Arc::new(Ontology::cambridge());
    let db = Arc::new(VenueDb::cambridge(&ontology));
    (ontology, db)
}

/// Parse a JSON string into Python objects.
fn to_py<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (json,))
}

/// Number of candidate actions for a state with `items` history items.
#[pyfunction]
#[pyo3(signature = (items, include_dontcare = false))]
fn candidate_count(items: usize, include_dontcare: bool) -> usize {
    count(&Ontology::cambridge(), items, CandidateConfig { include_dontcare })
}

fn scorer(spec: &str) -> PyResult<Arc<dyn ActionScorer>> {
    Ok(match spec {
        "oracle" => Arc::new(OracleScorer),
        "zero" => Arc::new(ConstantScorer(0.0)),
        path => Arc::new(RelevanceModel::load(path).map_err(err)?),
    })
}

/// Simulate `dialogues` dialogues; `scorer` is `oracle`, `zero` or a model path.
#[pyfunction]
#[pyo3(signature = (scorer = "oracle", dialogues = 100, seed = 1))]
fn simulate<'py>(py: Python<'py>, scorer: &str, dialogues: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let (ontology, db) = world();
    let bank = SurfaceBank::builtin(&ontology);
    let setup = SimulationSetup {
        system: DialogueSystem::new(ontology, db, self::scorer(scorer)?),
        bank: &bank,
        config: SimulatorConfig::default(),
    };
    let (metrics, _) = py.detach(|| run_simulation(&setup, dialogues, seed)).map_err(err)?;
    to_py(py, &serde_json::to_string(&metrics).expect("metrics serialize"))
}

/// Generate a synthetic corpus, build the baseline dataset, train a scorer
/// and save it to `out`. Returns the training report.
#[pyfunction]
#[pyo3(signature = (out, dialogues = 400, seed = 1))]
fn train_baseline<'py>(py: Python<'py>, out: &str, dialogues: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let (ontology, db) = world();
    let report = py
        .detach(|| -> asu_core::Result<String> {
            let bank = SurfaceBank::builtin(&ontology);
            let setup = SimulationSetup {
                system: DialogueSystem::new(ontology.clone(), db, Arc::new(OracleScorer)),
                bank: &bank,
                config: SimulatorConfig::corpus_style(),
            };
            let (_, records) = run_simulation(&setup, dialogues, seed)?;
            let corpus = records_to_corpus(&records);
            let ds = gen_baseline(&corpus, &ontology, &BaselineConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))?;
            let model = RelevanceModel::train(&ds.train, Lexicon::from_ontology(&ontology), &TrainConfig { seed, ..TrainConfig::default() })?;
            model.save(out)?;
            Ok(serde_json::to_string(&model.report()).expect("report serializes"))
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// A trained relevance scorer.
#[pyclass(frozen)]
struct Model(RelevanceModel);

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model(RelevanceModel::load(path).map_err(err)?))
    }

    /// Relevance in [0, 1] of one (system acts, utterance, item, action sentence) input.
    fn score(&self, sys: &str, usr: &str, item: &str, act: &str) -> f64 {
        self.0.score_input(&ScorerInput::new(sys, usr, item, act))
    }
}

/// One conversation with the tracker and the rule policy.
#[pyclass(unsendable)]
struct Tracker(Session);

#[pymethods]
impl Tracker {
    #[new]
    fn new(model_path: &str) -> PyResult<Self> {
        let (ontology, db) = world();
        let model: Arc<dyn ActionScorer> = Arc::new(RelevanceModel::load(model_path).map_err(err)?);
        Ok(Tracker(Session::open(DialogueSystem::new(ontology, db, model), "python")))
    }

    fn greeting(&self) -> String {
        self.0.transcript()[0].text.clone()
    }

    /// Process one utterance: `(reply, executed actions)`.
    fn step(&mut self, text: &str) -> PyResult<(String, Vec<String>)> {
        let out = self.0.step(text, None).map_err(err)?;
        let executed = out.update.map(|u| u.executed.iter().map(ToString::to_string).collect()).unwrap_or_default();
        Ok((out.text, executed))
    }

    /// The dialogue state as Python objects.
    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &serde_json::to_string(self.0.state()).expect("state serializes"))
    }
}

#[pymodule]
fn asu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(candidate_count, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(train_baseline, m)?)?;
    m.add_class::<Model>()?;
    m.add_class::<Tracker>()?;
    Ok(())
}
