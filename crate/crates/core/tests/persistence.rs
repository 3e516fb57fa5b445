//! Database behavior under faults and long edit sessions.

mod common;

use fmea_core::generation::{accept_step, EditOp, GenerationStepResult};
use fmea_core::model::{Boundary, FmeaTree, GenerationStep, NodeId, Study};
use fmea_core::persistence::Database;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn file_db() -> (tempfile::TempDir, std::path::PathBuf, Database) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fmea.sqlite");
    let db = Database::open(&path).unwrap();
    (dir, path, db)
}

fn fresh_study() -> Study {
    Study::new("Centrifugal pump", "End-suction pump with mechanical seal", []).unwrap()
}

fn tree_with_tasks(rng: &mut ChaCha8Rng) -> FmeaTree {
    loop {
        let tree = common::random_tree(rng);
        let tasks: usize = tree
            .locations
            .iter()
            .flat_map(|l| &l.mechanisms)
            .flat_map(|m| &m.influences)
            .map(|i| i.tasks.len())
            .sum();
        if tasks > 0 {
            return tree;
        }
    }
}

fn install_fault(path: &std::path::Path, table: &str) {
    let conn = rusqlite::Connection::open(path).unwrap();
    conn.execute_batch(&format!(
        "CREATE TRIGGER inject_fault BEFORE INSERT ON {table} BEGIN SELECT RAISE(ABORT, 'injected fault'); END;"
    ))
    .unwrap();
}

#[test]
fn fault_mid_save_keeps_prior_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for table in ["failure_locations", "preventive_tasks", "node_provenance"] {
        let (_dir, path, db) = file_db();
        let study = fresh_study();
        let prior = tree_with_tasks(&mut rng);
        db.save_study(&study).unwrap();
        db.save_study_and_tree(&study, &prior).unwrap();
        let counts = db.row_counts(&study.study_id).unwrap();

        install_fault(&path, table);
        let next = tree_with_tasks(&mut rng);
        assert!(db.save_tree(&study.study_id, &next).is_err(), "fault in {table} went unnoticed");

        assert_eq!(db.load_tree(&study.study_id).unwrap(), prior, "fault in {table}");
        assert_eq!(db.row_counts(&study.study_id).unwrap(), counts);
        assert_eq!(db.orphan_count().unwrap(), 0);
    }
}

#[test]
fn committed_tree_survives_reopen() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_dir, path, db) = file_db();
    let study = fresh_study();
    let tree = tree_with_tasks(&mut rng);
    db.save_study(&study).unwrap();
    db.save_study_and_tree(&study, &tree).unwrap();
    drop(db);

    let db = Database::open(&path).unwrap();
    assert_eq!(db.load_study(&study.study_id).unwrap(), study);
    assert_eq!(db.load_tree(&study.study_id).unwrap(), tree);
}

/// Names of the items under `parent` at `step`.
fn siblings(tree: &FmeaTree, step: GenerationStep, parent: Option<&NodeId>) -> Vec<String> {
    let locs = &tree.locations;
    let mechs = || locs.iter().flat_map(|l| &l.mechanisms);
    let infls = || mechs().flat_map(|m| &m.influences);
    match step {
        GenerationStep::Boundary => tree.boundary.main_parts.clone(),
        GenerationStep::FailureLocations => locs.iter().map(|l| l.name.clone()).collect(),
        GenerationStep::DegradationMechanisms => {
            let p = parent.unwrap();
            locs.iter().filter(|l| &l.node_id == p).flat_map(|l| &l.mechanisms).map(|m| m.name.clone()).collect()
        }
        GenerationStep::DegradationInfluences => {
            let p = parent.unwrap();
            mechs().filter(|m| &m.node_id == p).flat_map(|m| &m.influences).map(|i| i.name.clone()).collect()
        }
        GenerationStep::PreventiveTasks => {
            let p = parent.unwrap();
            infls().filter(|i| &i.node_id == p).flat_map(|i| &i.tasks).map(|t| t.description.clone()).collect()
        }
    }
}

/// Node ids at the level above `step`.
fn parents(tree: &FmeaTree, step: GenerationStep) -> Vec<NodeId> {
    let locs = &tree.locations;
    match step {
        GenerationStep::Boundary | GenerationStep::FailureLocations => Vec::new(),
        GenerationStep::DegradationMechanisms => locs.iter().map(|l| l.node_id.clone()).collect(),
        GenerationStep::DegradationInfluences => {
            locs.iter().flat_map(|l| &l.mechanisms).map(|m| m.node_id.clone()).collect()
        }
        GenerationStep::PreventiveTasks => locs
            .iter()
            .flat_map(|l| &l.mechanisms)
            .flat_map(|m| &m.influences)
            .map(|i| i.node_id.clone())
            .collect(),
    }
}

const WORDS: [&str; 10] =
    ["bearing", "seal", "impeller", "wear", "corrosion", "fatigue", "cavitation", "misalignment", "vibration", "heat"];

fn word(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", WORDS.choose(rng).unwrap(), rng.gen_range(0..6))
}

fn random_edits(rng: &mut ChaCha8Rng, existing: &[String]) -> Vec<EditOp> {
    let mut edits = Vec::new();
    for _ in 0..rng.gen_range(0..3) {
        match (rng.gen_range(0..3), existing.choose(rng)) {
            (0, _) | (_, None) => edits.push(EditOp::add(word(rng))),
            (1, Some(t)) => edits.push(EditOp::remove(t.clone())),
            (_, Some(t)) => edits.push(EditOp::rename(t.clone(), word(rng))),
        }
    }
    edits
}

#[test]
fn accept_sequences_leave_no_orphans() {
    let db = Database::open_in_memory().unwrap();
    let mut accepted = 0;
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut study = fresh_study();
        study.advance();
        let mut tree = FmeaTree::new(Boundary {
            functional_overview: "moves water".into(),
            main_parts: vec!["Pump".into(), "Motor".into()],
        });
        db.save_study(&study).unwrap();
        db.save_study_and_tree(&study, &tree).unwrap();

        for _ in 0..40 {
            let step = *GenerationStep::ALL[1..=study.current_step.index()].choose(&mut rng).unwrap();
            let parent = if step.needs_parent() { parents(&tree, step).choose(&mut rng).cloned() } else { None };
            if step.needs_parent() && parent.is_none() {
                if study.current_step < GenerationStep::PreventiveTasks && tree.level_count(study.current_step) > 0 {
                    study.advance();
                }
                continue;
            }
            let staged = GenerationStepResult {
                step,
                parent_node_id: parent.clone(),
                items: (0..rng.gen_range(0..4)).map(|_| word(&mut rng)).collect(),
                raw_response: String::new(),
                context_refs: vec!["doc#c0000".into()],
            };
            let existing = siblings(&tree, step, parent.as_ref());
            let edits = random_edits(&mut rng, &existing);
            let mark = rng.gen_bool(0.4);
            let Ok(next) = accept_step(&mut study, &tree, &staged, &edits, mark) else { continue };
            tree = next;
            db.save_study_and_tree(&study, &tree).unwrap();
            accepted += 1;

            assert_eq!(db.orphan_count().unwrap(), 0, "seed {seed}");
            assert_eq!(db.load_tree(&study.study_id).unwrap(), tree, "seed {seed}");
            let counts = db.row_counts(&study.study_id).unwrap();
            assert_eq!(counts.failure_locations, tree.level_count(GenerationStep::FailureLocations));
            assert_eq!(counts.preventive_tasks, tree.level_count(GenerationStep::PreventiveTasks));
        }
        db.delete_study(&study.study_id).unwrap();
        assert_eq!(db.orphan_count().unwrap(), 0);
    }
    assert!(accepted > 300, "only {accepted} accepts exercised");
}
