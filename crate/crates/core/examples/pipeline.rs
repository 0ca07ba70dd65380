//! End-to-end run: synthetic corpus, the three datasets, three trained
//! scorers and a simulated evaluation of each.

use std::sync::Arc;
use std::time::Instant;

use asu_core::datagen::{gen_baseline, gen_ext_a, gen_ext_h, ActiveLearningConfig, BaselineConfig, ExtHConfig};
use asu_core::eval::{records_to_corpus, run_simulation, SimulationSetup};
use asu_core::scorer::{Lexicon, TrainConfig};
use asu_core::simulator::{SimulatorConfig, SurfaceBank};
use asu_core::{ActionScorer, DialogueSystem, Ontology, OracleScorer, RelevanceModel, VenueDb};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> asu_core::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let corpus_n = args.first().copied().unwrap_or(1600);
    let eval_n = args.get(1).copied().unwrap_or(1000);
    let mine_n = args.get(2).copied().unwrap_or(5000);
    let ontology = Arc::new(Ontology::cambridge());
    let db = Arc::new(VenueDb::cambridge(&ontology));
    let builtin = SurfaceBank::builtin(&ontology);
    let t = Instant::now();
    let oracle = DialogueSystem::new(ontology.clone(), db.clone(), Arc::new(OracleScorer));
    let corpus_setup = SimulationSetup { system: oracle.clone(), bank: &builtin, config: SimulatorConfig::corpus_style() };
    let (_, records) = run_simulation(&corpus_setup, corpus_n, 1_000_000)?;
    let corpus = records_to_corpus(&records);
    println!("corpus {} turns {:?}", corpus.turns.len(), t.elapsed());
    let bank = SurfaceBank::with_corpus(&ontology, &corpus);

    let gold_setup = SimulationSetup { system: oracle, bank: &bank, config: SimulatorConfig::default() };
    let (m, _) = run_simulation(&gold_setup, eval_n, 0)?;
    println!("GOLD {m:?} {:?}", t.elapsed());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let baseline = gen_baseline(&corpus, &ontology, &BaselineConfig::default(), &mut rng)?;
    println!("baseline {:?}", baseline.stats);
    let lexicon = Lexicon::from_ontology(&ontology);
    let cfg = TrainConfig::default();
    let train = |ds: &asu_core::datagen::Dataset| RelevanceModel::train(&ds.train, lexicon.clone(), &cfg);
    let evaluate = |name: &str, model: RelevanceModel| -> asu_core::Result<Arc<RelevanceModel>> {
        let model = Arc::new(model);
        let system = DialogueSystem::new(ontology.clone(), db.clone(), model.clone() as Arc<dyn ActionScorer>);
        let setup = SimulationSetup { system, bank: &bank, config: SimulatorConfig::default() };
        let (m, _) = run_simulation(&setup, eval_n, 0)?;
        println!("{name}: success {:.3} acc {:.3} inf {:.3} req {:.3} ref {:.3} len {:.1} {:?}", m.success_rate, m.accuracy_all, m.accuracy_inform, m.accuracy_request, m.accuracy_referring, m.avg_length, t.elapsed());
        Ok(model)
    };
    let base_model = evaluate("baseline", train(&baseline)?)?;
    let ext_h = gen_ext_h(&baseline, &corpus, &ontology, &db, &bank, &ExtHConfig::default(), &mut rng)?;
    println!("ext_h {:?}", ext_h.stats);
    evaluate("ext_h", train(&ext_h)?)?;
    let system = DialogueSystem::new(ontology.clone(), db.clone(), base_model.clone() as Arc<dyn ActionScorer>);
    let setup = SimulationSetup { system, bank: &bank, config: SimulatorConfig::default() };
    let al = ActiveLearningConfig { n_dialogues: mine_n, ..Default::default() };
    let ext_a = gen_ext_a(&baseline, Some(&base_model), &setup, &al)?;
    println!("ext_a {:?} {:?}", ext_a.stats, t.elapsed());
    let audit = asu_core::datagen::audit_ext_a(&ext_a, &base_model, &al);
    println!("audit {audit:?} pass {}", audit.passes(&al));
    evaluate("ext_a", train(&ext_a)?)?;
    Ok(())
}
