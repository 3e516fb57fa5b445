//! Indexes every benchmark guide into one store and runs a few queries,
//! with and without restricting hits to one document.
//!
//!     cargo run -p fmea-core --example retrieve_context -- "cavitation at the impeller"

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use fmea_core::index::{query, HashEmbedder, VectorStore};
use fmea_core::ingestion::{Document, DocumentFormat, Ingestor};
use fmea_core::service::mock::UnavailableTextService;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let guides = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/benchmark/guides");
    let embedder = Arc::new(HashEmbedder::default());
    let store = VectorStore::new(HashEmbedder::DEFAULT_DIM);
    let ingestor = Ingestor::new(Arc::new(UnavailableTextService::permanent()), embedder.clone());

    let mut paths: Vec<_> = std::fs::read_dir(&guides)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    paths.sort();
    let mut first = None;
    for path in &paths {
        let title = path.file_stem().unwrap().to_string_lossy().into_owned();
        let doc = Document::new(title, std::fs::read_to_string(path)?, DocumentFormat::Markdown)?;
        first.get_or_insert_with(|| (doc.title.clone(), doc.document_id.clone()));
        ingestor.ingest(&doc, &store)?;
    }
    println!("{} entries from {} guides\n", store.len(), paths.len());

    let text = std::env::args().nth(1).unwrap_or_else(|| "bearing wear and shaft seal leakage".to_string());
    println!("query: {text}");
    for hit in query(&text, 5, None, embedder.as_ref(), &store)? {
        println!("  {:.3} {:<40} {}", hit.score, hit.entry_id, preview(&hit.payload));
    }

    let (title, id) = first.expect("at least one guide");
    let only: BTreeSet<_> = [id].into();
    println!("\nsame query, {title} only:");
    for hit in query(&text, 3, Some(&only), embedder.as_ref(), &store)? {
        println!("  {:.3} {:<40} {}", hit.score, hit.entry_id, preview(&hit.payload));
    }
    Ok(())
}

fn preview(s: &str) -> String {
    let line = s.lines().next().unwrap_or("");
    line.chars().take(60).collect()
}
