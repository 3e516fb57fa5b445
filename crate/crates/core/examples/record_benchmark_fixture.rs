//! Regenerates `fixtures/benchmark/recorded_responses.json` and
//! `fixtures/benchmark/expected_table.txt`.
//!
//! Generation prompts are answered by the extractive mock, which lists every
//! known failure location that appears in the fenced context, and every
//! exchange is recorded. Replaying the recording through
//! `ScriptedTextService` reproduces the table byte for byte.
//!
//!     cargo run -p fmea-core --example record_benchmark_fixture

use std::path::Path;
use std::sync::Arc;

use fmea_core::evaluation::{run_benchmark, BenchmarkServices, DEFAULT_THRESHOLD};
use fmea_core::generation::ContextMode;
use fmea_core::index::HashEmbedder;
use fmea_core::service::mock::{ExtractiveTextService, RecordingTextService, UnavailableTextService};
use serde::Deserialize;

#[derive(Deserialize)]
struct Lexicon {
    zero_shot_reply: String,
    entities: Vec<String>,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/benchmark");
    let lexicon: Lexicon = serde_json::from_str(&std::fs::read_to_string(dir.join("lexicon.json"))?)?;

    let oracle = ExtractiveTextService::new(lexicon.entities).with_zero_shot_reply(lexicon.zero_shot_reply);
    let recorder = Arc::new(RecordingTextService::new(oracle));
    let embedder = Arc::new(HashEmbedder::default());
    let mut services = BenchmarkServices::new(recorder.clone(), embedder);
    // no cleaning service: ingestion takes the rule-based path, which is
    // deterministic and keeps the recording independent of cleaning replies
    services.ingestion_text = Arc::new(UnavailableTextService::permanent());

    let scenarios = [ContextMode::ZeroShot, ContextMode::TopK(3), ContextMode::TopK(5), ContextMode::LongContext];
    let out = run_benchmark(&dir.join("cases.json"), &scenarios, DEFAULT_THRESHOLD, &services)?;

    std::fs::write(dir.join("recorded_responses.json"), recorder.to_fixture_json())?;
    std::fs::write(dir.join("expected_table.txt"), &out.table)?;
    print!("{}", out.table);
    for row in &out.report.rows {
        for case in &row.cases {
            println!("{:<10} {} p={:.2} r={:.2} refs={:?}", row.scenario.to_string(), case.case_id, case.precision, case.recall, case.context_refs);
        }
        for failed in &row.failed_cases {
            println!("{:<10} {} FAILED {}", row.scenario.to_string(), failed.case_id, failed.error);
        }
    }
    println!("{} recorded replies", recorder.rules().len());
    Ok(())
}
