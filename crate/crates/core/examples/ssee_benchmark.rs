//! Replays the recorded benchmark run and prints the comparison table for
//! zero-shot, 3-chunk, 5-chunk and long-context generation.
//!
//!     cargo run -p fmea-core --example ssee_benchmark -- [threshold]
//!
//! The `fmea evaluate` command does the same against live services.

use std::path::Path;
use std::sync::Arc;

use fmea_core::evaluation::{run_benchmark, BenchmarkServices, DEFAULT_THRESHOLD};
use fmea_core::generation::ContextMode;
use fmea_core::index::HashEmbedder;
use fmea_core::service::mock::{ScriptedTextService, UnavailableTextService};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/benchmark");
    let threshold = match std::env::args().nth(1) {
        Some(t) => t.parse()?,
        None => DEFAULT_THRESHOLD,
    };

    let replay = Arc::new(ScriptedTextService::from_file(dir.join("recorded_responses.json"))?);
    let mut services = BenchmarkServices::new(replay, Arc::new(HashEmbedder::default()));
    services.ingestion_text = Arc::new(UnavailableTextService::permanent());

    let scenarios = [ContextMode::ZeroShot, ContextMode::TopK(3), ContextMode::TopK(5), ContextMode::LongContext];
    let out = run_benchmark(&dir.join("cases.json"), &scenarios, threshold, &services)?;
    print!("{}", out.table);

    if threshold == DEFAULT_THRESHOLD {
        let expected = std::fs::read_to_string(dir.join("expected_table.txt"))?;
        println!("\nmatches recorded table: {}", out.table == expected);
    }
    Ok(())
}
