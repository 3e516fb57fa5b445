//! A complete supervised study: ingest a guide, generate each level with
//! retrieved context, apply the reviewer's edits, persist every commit and
//! export the finished worksheet.
//!
//! Replies come from a scripted fixture, so the run is offline and
//! repeatable.
//!
//!     cargo run -p fmea-core --example supervised_study

use std::path::Path;
use std::sync::Arc;

use fmea_core::generation::{accept_step, run_step, ContextMode, EditOp, GenerationServices, StepRequest};
use fmea_core::index::{HashEmbedder, VectorStore};
use fmea_core::ingestion::{Document, DocumentFormat, Ingestor};
use fmea_core::model::{derive_failure_modes, FmeaTree, GenerationStep, NodeId, Study};
use fmea_core::persistence::{Database, ExportFormat};
use fmea_core::service::mock::{ScriptedTextService, UnavailableTextService};

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Generates, reviews and commits one step, then saves the study.
fn commit(
    db: &Database,
    services: &GenerationServices,
    study: &mut Study,
    tree: &FmeaTree,
    step: GenerationStep,
    parent: Option<NodeId>,
    edits: &[EditOp],
    last_of_level: bool,
) -> AnyResult<FmeaTree> {
    let request = StepRequest { step, parent_node_id: parent, mode: ContextMode::TopK(3) };
    let staged = run_step(study, tree, &request, services)?;
    println!("  {:<24} staged {:?} from {} excerpts", step.as_str(), staged.items, staged.context_refs.len());
    let tree = accept_step(study, tree, &staged, edits, last_of_level)?;
    db.save_study_and_tree(study, &tree)?;
    Ok(tree)
}

fn main() -> AnyResult<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let db = Arc::new(Database::open_in_memory()?);
    let store = Arc::new(VectorStore::new(HashEmbedder::DEFAULT_DIM));
    let embedder = Arc::new(HashEmbedder::default());

    let raw = std::fs::read_to_string(fixtures.join("golden/rtu_manual.md"))?;
    let guide = Document::new("RTU-4 Service Manual", raw, DocumentFormat::Markdown)?;
    let ingested = Ingestor::new(Arc::new(UnavailableTextService::permanent()), embedder.clone()).ingest(&guide, &store)?;
    db.save_document(&ingested.processed)?;
    println!("ingested {:?}", ingested.receipt);

    let mut study = Study::new("Rooftop unit RTU-4", "Packaged rooftop air conditioner", [guide.document_id.clone()])?;
    db.save_study(&study)?;

    let text = Arc::new(ScriptedTextService::from_file(fixtures.join("mock/rtu_study_script.json"))?);
    let services = GenerationServices::new(text, embedder, store, db.clone());
    let mut tree = db.load_tree(&study.study_id)?;

    tree = commit(&db, &services, &mut study, &tree, GenerationStep::Boundary, None, &[], true)?;
    println!("boundary: {} / {:?}", tree.boundary.functional_overview, tree.boundary.main_parts);

    // the reviewer drops one location and adds one the model missed
    let edits = [EditOp::remove("Expansion valve"), EditOp::add("Damper actuator")];
    tree = commit(&db, &services, &mut study, &tree, GenerationStep::FailureLocations, None, &edits, true)?;

    for step in [GenerationStep::DegradationMechanisms, GenerationStep::DegradationInfluences, GenerationStep::PreventiveTasks] {
        let parents: Vec<NodeId> = tree.flatten().into_iter().filter(|n| Some(n.level) == step.previous()).map(|n| n.node_id).collect();
        for (i, parent) in parents.iter().enumerate() {
            let edits = match tree.path_to(parent).as_deref() {
                Some([loc, mech]) if loc == "Fan belt" && mech == "Wear" => vec![EditOp::rename("Overload", "Belt overtension")],
                _ => Vec::new(),
            };
            tree = commit(&db, &services, &mut study, &tree, step, Some(parent.clone()), &edits, i + 1 == parents.len())?;
        }
    }

    let stored = db.load_tree(&study.study_id)?;
    assert_eq!(stored, tree);
    println!("\n{} failure modes, row counts {:?}", derive_failure_modes(&stored).len(), db.row_counts(&study.study_id)?);
    println!("\n{}", String::from_utf8(db.export_fmea(&study.study_id, ExportFormat::Csv)?)?);
    Ok(())
}
