//! Ingests a maintenance guide and shows what each stage produced.
//!
//!     cargo run -p fmea-core --example ingest_guide -- [path/to/guide.md] [store.fvs]
//!
//! Without arguments the bundled four-page rooftop unit manual is used. No
//! cleaning service is configured, so the rule-based filter runs and the
//! receipt is flagged degraded.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fmea_core::index::{HashEmbedder, VectorStore};
use fmea_core::ingestion::{parse_document, BlockKind, Document, DocumentFormat, Ingestor};
use fmea_core::service::mock::UnavailableTextService;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden/rtu_manual.md"));
    let raw = std::fs::read_to_string(&path)?;
    let format = DocumentFormat::from_extension(path.extension().and_then(|e| e.to_str()).unwrap_or(""));
    let title = path.file_stem().and_then(|s| s.to_str()).unwrap_or("guide").to_string();
    let doc = Document::new(title, raw, format)?;

    let parsed = parse_document(&doc.raw_text, doc.format, doc.page_markers.as_deref())?;
    let count = |k: BlockKind| parsed.blocks.iter().filter(|b| b.kind == k).count();
    println!(
        "{} blocks: {} text, {} heading, {} table, {} page furniture",
        parsed.blocks.len(),
        count(BlockKind::Text),
        count(BlockKind::Heading),
        count(BlockKind::Table),
        count(BlockKind::PageFurniture)
    );

    let store = VectorStore::new(HashEmbedder::DEFAULT_DIM);
    let ingestor = Ingestor::new(Arc::new(UnavailableTextService::permanent()), Arc::new(HashEmbedder::default()));
    let out = ingestor.ingest(&doc, &store)?;
    println!("{:?}", out.receipt);

    println!("\nparagraphs:");
    for p in &out.processed.paragraphs {
        println!("  {} {}", p.paragraph_id, p.text);
    }
    println!("\nchunks:");
    for c in &out.processed.chunks {
        println!("  {} ({} chars)", c.chunk_id, c.char_length);
    }
    println!("\ntables:");
    for t in &out.processed.tables {
        println!("  {} caption={:?}\n    summary: {}", t.table_id, t.caption, t.summary);
    }

    if let Some(store_path) = args.next() {
        store.save(&store_path)?;
        println!("\nwrote {} entries to {store_path}", store.len());
    }
    Ok(())
}
