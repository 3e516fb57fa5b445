//! Ingestion and indexing, end to end on bundled fixtures.

mod common;

use std::fmt::Write as _;
use std::fs;
use std::sync::Arc;

use fmea_core::index::{EmbeddingProvider, EntryKind, HashEmbedder, VectorStore};
use fmea_core::ingestion::{
    filter_noise, parse_document, Block, BlockKind, Document, DocumentFormat, Ingestor, ParsedDocument,
};
use fmea_core::service::mock::{FnTextService, ScriptedTextService, UnavailableTextService};
use fmea_core::service::{CompletionResponse, ScriptRule, TextService};
use proptest::prelude::*;

fn golden(name: &str) -> std::path::PathBuf {
    common::fixtures().join("golden").join(name)
}

fn rtu_manual() -> Document {
    let raw = fs::read_to_string(golden("rtu_manual.md")).unwrap();
    Document::new("RTU-4 Service Manual", raw, DocumentFormat::Markdown).unwrap()
}

fn ingestor(text: impl TextService + 'static) -> Ingestor {
    let embedder: Arc<dyn EmbeddingProvider> = Arc::new(HashEmbedder::default());
    Ingestor::new(Arc::new(text), embedder)
}

fn listing(parsed: &ParsedDocument) -> String {
    let mut out = String::new();
    for b in &parsed.blocks {
        let kind = serde_json::to_value(b.kind).unwrap();
        let (s, e) = b.source_span;
        writeln!(out, "{} {} {s}..{e} {:?}", b.block_id, kind.as_str().unwrap(), b.content).unwrap();
    }
    out
}

#[test]
fn block_sequence_matches_golden() {
    let doc = rtu_manual();
    let parsed = parse_document(&doc.raw_text, doc.format, doc.page_markers.as_deref()).unwrap();
    let actual = listing(&parsed);
    let path = golden("rtu_manual.blocks.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, &actual).unwrap();
    }
    let expected = fs::read_to_string(&path).expect("golden listing missing; rerun with UPDATE_GOLDEN=1");
    assert_eq!(actual, expected);
    assert!(parsed.warnings.is_empty());
}

#[test]
fn running_headers_page_numbers_and_footnotes_are_furniture() {
    let doc = rtu_manual();
    let parsed = parse_document(&doc.raw_text, doc.format, doc.page_markers.as_deref()).unwrap();
    let furniture: Vec<&str> =
        parsed.blocks.iter().filter(|b| b.kind == BlockKind::PageFurniture).map(|b| b.content.as_str()).collect();
    assert_eq!(furniture.iter().filter(|c| c.starts_with("Rooftop Unit RTU-4 Service")).count(), 4);
    assert_eq!(furniture.iter().filter(|c| c.starts_with("Page ")).count(), 4);
    assert!(furniture.iter().any(|c| c.starts_with("*Superheat")));
}

#[test]
fn receipt_counts_chunks_and_tables() {
    let store = VectorStore::new(HashEmbedder::DEFAULT_DIM);
    let out = ingestor(UnavailableTextService::transient()).ingest(&rtu_manual(), &store).unwrap();
    assert!(out.receipt.chunk_count >= 1);
    assert_eq!(out.receipt.table_count, 2);
    assert!(out.receipt.degraded);

    let body: Vec<_> = out.processed.paragraphs.iter().filter(|p| !p.text.starts_with(char::is_numeric)).collect();
    // title heading + ten body paragraphs + four section headings
    assert_eq!(out.processed.paragraphs.len(), 15, "{:#?}", out.processed.paragraphs);
    assert!(body.iter().any(|p| p.text.contains("Over-greasing pushes lubricant")));
    assert!(!out.processed.full_text().contains("Page 2 of 4"));
    assert!(!out.processed.full_text().contains("Lithium grease"));

    let captions: Vec<_> = out.processed.tables.iter().map(|t| t.caption.as_deref()).collect();
    assert_eq!(captions, [Some("Lubrication schedule"), Some("Safety devices")]);
    assert!(!out.processed.full_text().contains("Table 1: Lubrication schedule"));

    let kinds: Vec<EntryKind> = store.entries().iter().map(|e| e.kind).collect();
    assert_eq!(kinds.iter().filter(|k| **k == EntryKind::Table).count(), 2);
    assert_eq!(store.len(), out.receipt.chunk_count + 2);
}

#[test]
fn reingesting_leaves_the_store_unchanged() {
    let store = VectorStore::new(HashEmbedder::DEFAULT_DIM);
    let ing = ingestor(UnavailableTextService::transient());
    let first = ing.ingest(&rtu_manual(), &store).unwrap();
    let before = store.entries();
    let second = ing.ingest(&rtu_manual(), &store).unwrap();
    assert_eq!(first.receipt, second.receipt);
    assert_eq!(store.entries(), before);
}

#[test]
fn store_file_round_trips() {
    let store = VectorStore::new(HashEmbedder::DEFAULT_DIM);
    ingestor(UnavailableTextService::transient()).ingest(&rtu_manual(), &store).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.fvs");
    store.save(&path).unwrap();
    let loaded = VectorStore::load(&path).unwrap();
    assert_eq!(loaded.dim(), store.dim());
    assert_eq!(loaded.entries(), store.entries());

    let q = HashEmbedder::default().embed_text("belt tension and sheave alignment");
    assert_eq!(loaded.search(&q, 3, None).unwrap(), store.search(&q, 3, None).unwrap());
}

#[test]
fn noisy_page_is_replaced_by_the_cleaning_reply() {
    let raw = fs::read_to_string(golden("noisy_page.txt")).unwrap();
    let reply = fs::read_to_string(golden("noisy_page.reply.txt")).unwrap();
    let parsed = parse_document(&raw, DocumentFormat::PlainText, None).unwrap();
    let svc = ScriptedTextService::new(vec![ScriptRule::new("", reply.clone())]);

    let out = filter_noise(&parsed.blocks, &svc);
    assert!(!out.degraded);
    let texts: Vec<&str> = out.paragraphs.iter().map(|p| p.text.as_str()).collect();
    let expected: Vec<&str> = reply.split("\n\n").map(str::trim).filter(|p| !p.is_empty()).collect();
    assert_eq!(texts, expected);
    // the bare page number never reaches the service
    assert!(svc.requests().iter().all(|r| !r.user_content.lines().any(|l| l.trim() == "12")));
}

#[test]
fn ingest_uses_the_cleaning_reply_for_chunks() {
    let reply = "The unit has a supply fan.\n\nIt also has a cooling coil.";
    let svc = FnTextService(move |_req: &fmea_core::service::CompletionRequest| {
        Ok(CompletionResponse { text: reply.to_string() })
    });
    let doc = Document::new("tiny", "garbled text\nPage 1\nmore garbled text", DocumentFormat::PlainText).unwrap();
    let store = VectorStore::new(HashEmbedder::DEFAULT_DIM);
    let out = ingestor(svc).ingest(&doc, &store).unwrap();
    assert!(!out.receipt.degraded);
    assert_eq!(out.processed.chunks.len(), 1);
    assert_eq!(out.processed.chunks[0].text, "The unit has a supply fan.\nIt also has a cooling coil.");
}

// Random documents built from prose lines, headings, pipe tables, page
// numbers and form-feed page breaks.
fn piece() -> impl Strategy<Value = String> {
    let word = prop::sample::select(vec!["fan", "coil", "belt", "motor", "damper", "valve", "seal", "filter"]);
    let line = prop::collection::vec(word.clone(), 1..8).prop_map(|w| w.join(" "));
    prop_oneof![
        4 => prop::collection::vec(line, 1..4).prop_map(|ls| ls.join("\n") + "."),
        1 => word.clone().prop_map(|w| format!("## {w} section")),
        1 => (1usize..4, 1usize..4).prop_map(|(c, r)| {
            let mut t = format!("|{}|\n|{}|", vec![" h "; c].join("|"), vec!["---"; c].join("|"));
            for i in 0..r {
                t.push_str(&format!("\n|{}|", vec![format!(" v{i} "); c].join("|")));
            }
            t
        }),
        1 => (1u32..50).prop_map(|n| format!("Page {n}")),
        1 => Just("\u{c}".to_string()),
    ]
}

fn document() -> impl Strategy<Value = String> {
    prop::collection::vec(piece(), 1..14).prop_map(|ps| format!("intro text here.\n\n{}", ps.join("\n\n")))
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn prose_words(blocks: &[Block]) -> Vec<String> {
    blocks.iter().filter(|b| matches!(b.kind, BlockKind::Text | BlockKind::Heading)).flat_map(|b| words(&b.content)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spans_tile_the_document(raw in document(), markdown in any::<bool>()) {
        let format = if markdown { DocumentFormat::Markdown } else { DocumentFormat::PlainText };
        let parsed = parse_document(&raw, format, None).unwrap();
        let mut covered = vec![false; raw.len()];
        let mut last_end = 0;
        for b in &parsed.blocks {
            let (s, e) = b.source_span;
            prop_assert!(s >= last_end && s < e && e <= raw.len(), "span {s}..{e} after {last_end}");
            covered[s..e].iter_mut().for_each(|c| *c = true);
            last_end = e;
        }
        for (i, c) in raw.char_indices() {
            prop_assert!(c.is_whitespace() || covered[i], "byte {i} {c:?} not covered");
        }
    }

    #[test]
    fn fallback_filter_keeps_prose_in_order(raw in document()) {
        let parsed = parse_document(&raw, DocumentFormat::Markdown, None).unwrap();
        let out = filter_noise(&parsed.blocks, &UnavailableTextService::transient());
        let kept: Vec<String> = out.paragraphs.iter().flat_map(|p| words(&p.text)).collect();
        prop_assert_eq!(kept, prose_words(&parsed.blocks));
        let firsts: Vec<&String> = out.paragraphs.iter().map(|p| &p.source_block_ids[0]).collect();
        prop_assert!(firsts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn echoing_service_keeps_prose_in_order(raw in document()) {
        let parsed = parse_document(&raw, DocumentFormat::Markdown, None).unwrap();
        let echo = FnTextService(|req: &fmea_core::service::CompletionRequest| {
            Ok(CompletionResponse { text: req.user_content.replace('\n', "\n\n") })
        });
        let out = filter_noise(&parsed.blocks, &echo);
        prop_assert!(!out.degraded);
        let kept: Vec<String> = out.paragraphs.iter().flat_map(|p| words(&p.text)).collect();
        prop_assert_eq!(kept, prose_words(&parsed.blocks));
        let firsts: Vec<&String> = out.paragraphs.iter().map(|p| &p.source_block_ids[0]).collect();
        prop_assert!(firsts.windows(2).all(|w| w[0] <= w[1]));
    }
}
