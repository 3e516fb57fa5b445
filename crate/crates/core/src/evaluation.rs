//! SSEE scoring of generated failure locations and the scenario benchmark.
//!
//! SSEE (semantic similarity entity evaluation) embeds candidate and gold
//! entities in one space and counts a candidate as correct when it is
//! matched one-to-one to a gold entity with cosine similarity ≥ τ.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{
    accept_step, run_step, ContextMode, GenerationServices, InferencePolicy, PromptTemplates, StepRequest,
};
use crate::index::{cosine_similarity, embed_all, EmbeddingProvider, IndexError, VectorStore};
use crate::ingestion::{Document, DocumentFormat, DocumentId, DocumentLibrary, IngestError, Ingestor};
use crate::model::{name_key, Boundary, FmeaTree, GenerationStep, Study};
use crate::service::TextService;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(#[from] IndexError),
    #[error("invalid case file: {0}")]
    CaseFileInvalid(String),
    #[error("ingesting {path}: {source}")]
    Ingest { path: String, source: IngestError },
}

/// One accepted candidate/gold pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub candidate_index: usize,
    pub gold_index: usize,
    pub similarity: f64,
}

/// Greedy one-to-one matching over a similarity matrix
/// (`similarity[candidate][gold]`). Pairs are visited by descending
/// similarity, ties by (candidate index, gold index); a pair is taken when
/// it clears `threshold` and neither side is already matched.
pub fn greedy_match(similarity: &[Vec<f64>], threshold: f64) -> Vec<MatchedPair> {
    let mut pairs: Vec<MatchedPair> = similarity
        .iter()
        .enumerate()
        .flat_map(|(ci, row)| {
            row.iter().enumerate().filter(|(_, &s)| s >= threshold).map(move |(gi, &s)| MatchedPair {
                candidate_index: ci,
                gold_index: gi,
                similarity: s,
            })
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.candidate_index.cmp(&b.candidate_index))
            .then(a.gold_index.cmp(&b.gold_index))
    });
    let mut used_c = HashSet::new();
    let mut used_g = HashSet::new();
    pairs
        .into_iter()
        .filter(|p| {
            if used_c.contains(&p.candidate_index) || used_g.contains(&p.gold_index) {
                return false;
            }
            used_c.insert(p.candidate_index);
            used_g.insert(p.gold_index);
            true
        })
        .collect()
}

fn check_threshold(threshold: f64) -> Result<(), EvalError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidThreshold(threshold))
    }
}

/// Pairwise cosine similarities; an all-zero embedding scores 0 against
/// everything.
pub fn similarity_matrix<S: AsRef<str>>(
    candidates: &[S],
    gold: &[S],
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<f64>>, EvalError> {
    if candidates.is_empty() || gold.is_empty() {
        return Ok(vec![Vec::new(); candidates.len()]);
    }
    let texts: Vec<&str> = candidates.iter().chain(gold).map(AsRef::as_ref).collect();
    let vectors = embed_all(&texts, embedder)?;
    let (cv, gv) = vectors.split_at(candidates.len());
    cv.iter()
        .map(|c| {
            gv.iter()
                .map(|g| match cosine_similarity(c, g) {
                    Ok(s) => Ok(s),
                    Err(IndexError::ZeroVector) => Ok(0.0),
                    Err(e) => Err(EvalError::from(e)),
                })
                .collect()
        })
        .collect()
}

pub fn ssee_match<S: AsRef<str>>(
    candidates: &[S],
    gold: &[S],
    threshold: f64,
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<MatchedPair>, EvalError> {
    check_threshold(threshold)?;
    Ok(greedy_match(&similarity_matrix(candidates, gold, embedder)?, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SseeScore {
    pub precision: f64,
    pub recall: f64,
    pub matches: usize,
}

pub fn ssee_precision_recall<S: AsRef<str>>(
    candidates: &[S],
    gold: &[S],
    threshold: f64,
    embedder: &dyn EmbeddingProvider,
) -> Result<SseeScore, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let matches = ssee_match(candidates, gold, threshold, embedder)?.len();
    let precision = if candidates.is_empty() { 0.0 } else { matches as f64 / candidates.len() as f64 };
    Ok(SseeScore { precision, recall: matches as f64 / gold.len() as f64, matches })
}

// cases

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CaseFileEntry {
    asset_name: String,
    #[serde(default)]
    asset_description: String,
    guide_document_path: PathBuf,
    gold_failure_locations: Vec<String>,
}

/// One benchmark asset with its guide and gold failure locations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    /// `case-01`, `case-02`, … in file order.
    pub case_id: String,
    pub asset_name: String,
    pub asset_description: String,
    pub guide_document_path: PathBuf,
    /// Set once the guide has been ingested.
    pub guide_document_id: Option<DocumentId>,
    pub gold_failure_locations: Vec<String>,
}

/// Reads a case file. Guide paths are resolved relative to the file.
pub fn load_cases(case_file: &Path) -> Result<Vec<EvalCase>, EvalError> {
    let invalid = |m: String| EvalError::CaseFileInvalid(format!("{}: {m}", case_file.display()));
    let text = std::fs::read_to_string(case_file).map_err(|e| invalid(e.to_string()))?;
    let entries: Vec<CaseFileEntry> = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
    if entries.is_empty() {
        return Err(invalid("no cases".into()));
    }
    let base = case_file.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let case_id = format!("case-{:02}", i + 1);
            if e.asset_name.trim().is_empty() {
                return Err(invalid(format!("{case_id} has an empty asset name")));
            }
            let mut seen = HashSet::new();
            let gold: Vec<String> = e
                .gold_failure_locations
                .into_iter()
                .map(|g| g.trim().to_string())
                .filter(|g| !g.is_empty() && seen.insert(name_key(g)))
                .collect();
            if gold.is_empty() {
                return Err(invalid(format!("{case_id} has no gold failure locations")));
            }
            Ok(EvalCase {
                case_id,
                asset_name: e.asset_name,
                asset_description: e.asset_description,
                guide_document_path: base.join(e.guide_document_path),
                guide_document_id: None,
                gold_failure_locations: gold,
            })
        })
        .collect()
}

// scenarios

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case_id: String,
    pub precision: f64,
    pub recall: f64,
    pub candidates: Vec<String>,
    pub context_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedCase {
    pub case_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: ContextMode,
    /// Macro-average over all cases; failed cases count as 0.
    pub precision: f64,
    pub recall: f64,
    pub n_cases: usize,
    pub failed_cases: Vec<FailedCase>,
    pub cases: Vec<CaseScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SseeReport {
    pub threshold: f64,
    pub rows: Vec<ScenarioRow>,
}

enum CaseOutcome {
    Scored(CaseScore),
    Failed(FailedCase),
}

fn evaluate_case(
    case: &EvalCase,
    scenario: ContextMode,
    threshold: f64,
    services: &GenerationServices,
    metric: &dyn EmbeddingProvider,
) -> Result<CaseScore, String> {
    let docs: Vec<DocumentId> = case.guide_document_id.iter().cloned().collect();
    let mut study = Study::new(&case.asset_name, &case.asset_description, docs).map_err(|e| e.to_string())?;
    // the benchmark scores failure locations only, so the boundary is
    // seeded from the asset itself rather than generated
    let description = case.asset_description.trim();
    let tree = FmeaTree::new(Boundary {
        functional_overview: if description.is_empty() { case.asset_name.clone() } else { description.to_string() },
        main_parts: vec![case.asset_name.clone()],
    });
    study.advance();

    let request = StepRequest { step: GenerationStep::FailureLocations, parent_node_id: None, mode: scenario };
    let result = run_step(&study, &tree, &request, services).map_err(|e| e.to_string())?;
    let committed = accept_step(&mut study, &tree, &result, &[], true).map_err(|e| e.to_string())?;
    let candidates: Vec<String> = committed.locations.iter().map(|l| l.name.clone()).collect();
    let score = ssee_precision_recall(&candidates, &case.gold_failure_locations, threshold, metric)
        .map_err(|e| e.to_string())?;
    Ok(CaseScore {
        case_id: case.case_id.clone(),
        precision: score.precision,
        recall: score.recall,
        candidates,
        context_refs: result.context_refs,
    })
}

/// Runs FailureLocations generation for every case under one scenario and
/// macro-averages the SSEE scores. Cases run in parallel; the row is
/// assembled in case-id order.
pub fn run_scenario(
    cases: &[EvalCase],
    scenario: ContextMode,
    threshold: f64,
    services: &GenerationServices,
    metric: &dyn EmbeddingProvider,
) -> Result<ScenarioRow, EvalError> {
    check_threshold(threshold)?;
    let mut outcomes: Vec<(String, CaseOutcome)> = cases
        .par_iter()
        .map(|case| {
            let outcome = match evaluate_case(case, scenario, threshold, services, metric) {
                Ok(score) => CaseOutcome::Scored(score),
                Err(error) => CaseOutcome::Failed(FailedCase { case_id: case.case_id.clone(), error }),
            };
            (case.case_id.clone(), outcome)
        })
        .collect();
    outcomes.sort_by(|a, b| a.0.cmp(&b.0));

    let n = outcomes.len();
    let mut row =
        ScenarioRow { scenario, precision: 0.0, recall: 0.0, n_cases: n, failed_cases: Vec::new(), cases: Vec::new() };
    for (_, outcome) in outcomes {
        match outcome {
            CaseOutcome::Scored(s) => row.cases.push(s),
            CaseOutcome::Failed(f) => row.failed_cases.push(f),
        }
    }
    if n > 0 {
        row.precision = row.cases.iter().map(|c| c.precision).sum::<f64>() / n as f64;
        row.recall = row.cases.iter().map(|c| c.recall).sum::<f64>() / n as f64;
    }
    Ok(row)
}

/// Providers used by a benchmark run.
#[derive(Clone)]
pub struct BenchmarkServices {
    /// Answers the generation prompts.
    pub generation_text: Arc<dyn TextService>,
    /// Cleans pages and summarizes tables during ingestion.
    pub ingestion_text: Arc<dyn TextService>,
    /// Embeds chunks and queries for retrieval.
    pub retrieval_embedder: Arc<dyn EmbeddingProvider>,
    /// Embeds entities for SSEE.
    pub metric_embedder: Arc<dyn EmbeddingProvider>,
    pub policy: InferencePolicy,
    pub templates: Arc<PromptTemplates>,
}

impl BenchmarkServices {
    /// One text service and one embedder for everything.
    pub fn new(text: Arc<dyn TextService>, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            generation_text: Arc::clone(&text),
            ingestion_text: text,
            retrieval_embedder: Arc::clone(&embedder),
            metric_embedder: embedder,
            policy: InferencePolicy::default(),
            templates: Arc::new(PromptTemplates::builtin()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutput {
    pub report: SseeReport,
    pub table: String,
}

/// Ingests every case's guide into a fresh store and library, returning the
/// cases with their document ids filled in.
pub fn prepare_cases(
    cases: Vec<EvalCase>,
    services: &BenchmarkServices,
) -> Result<(Vec<EvalCase>, GenerationServices), EvalError> {
    let store = Arc::new(VectorStore::new(services.retrieval_embedder.dim()));
    let library = Arc::new(DocumentLibrary::new());
    let ingestor = Ingestor::new(Arc::clone(&services.ingestion_text), Arc::clone(&services.retrieval_embedder));

    let mut prepared = Vec::with_capacity(cases.len());
    for mut case in cases {
        let path = case.guide_document_path.display().to_string();
        let raw = std::fs::read_to_string(&case.guide_document_path)
            .map_err(|e| EvalError::CaseFileInvalid(format!("{path}: {e}")))?;
        let format = case
            .guide_document_path
            .extension()
            .and_then(|e| e.to_str())
            .map_or(DocumentFormat::PlainText, DocumentFormat::from_extension);
        let ingest_err = |source| EvalError::Ingest { path: path.clone(), source };
        let doc = Document::new(case.asset_name.clone(), raw, format).map_err(ingest_err)?;
        let out = ingestor.ingest(&doc, &store).map_err(ingest_err)?;
        library.insert(out.processed);
        case.guide_document_id = Some(doc.document_id);
        prepared.push(case);
    }

    let mut generation = GenerationServices::new(
        Arc::clone(&services.generation_text),
        Arc::clone(&services.retrieval_embedder),
        store,
        library,
    );
    generation.policy = services.policy;
    generation.templates = Arc::clone(&services.templates);
    Ok((prepared, generation))
}

/// Loads the cases, ingests their guides, runs every scenario, and renders
/// the results table.
pub fn run_benchmark(
    case_file: &Path,
    scenarios: &[ContextMode],
    threshold: f64,
    services: &BenchmarkServices,
) -> Result<BenchmarkOutput, EvalError> {
    if scenarios.is_empty() {
        return Err(EvalError::CaseFileInvalid("no scenarios requested".into()));
    }
    check_threshold(threshold)?;
    let (cases, generation) = prepare_cases(load_cases(case_file)?, services)?;
    let rows = scenarios
        .iter()
        .map(|&s| run_scenario(&cases, s, threshold, &generation, services.metric_embedder.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let report = SseeReport { threshold, rows };
    let table = render_table(&report);
    Ok(BenchmarkOutput { report, table })
}

/// Fixed-width results table, two decimals.
pub fn render_table(report: &SseeReport) -> String {
    let headers = ["Method", "Context Length", "SSEE Precision", "SSEE Recall"];
    let rows: Vec<[String; 4]> = report
        .rows
        .iter()
        .map(|r| {
            let (method, length) = r.scenario.table_label();
            [method.to_string(), length, format!("{:.2}", r.precision), format!("{:.2}", r.recall)]
        })
        .collect();
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([headers[c].len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let line = |cells: [&str; 4], out: &mut String| {
        let _ = writeln!(
            out,
            "| {:<w0$} | {:<w1$} | {:>w2$} | {:>w3$} |",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
    };
    line(headers, &mut out);
    let _ = writeln!(
        out,
        "|{}|{}|{}|{}|",
        "-".repeat(widths[0] + 2),
        "-".repeat(widths[1] + 2),
        "-".repeat(widths[2] + 1) + ":",
        "-".repeat(widths[3] + 1) + ":"
    );
    for r in &rows {
        line([&r[0], &r[1], &r[2], &r[3]], &mut out);
    }
    let _ = writeln!(out, "\nSSEE similarity threshold {}", report.threshold);
    out
}
