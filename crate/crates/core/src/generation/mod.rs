//! Supervised, level-by-level generation of the FMEA tree.
//!
//! One step is: retrieve context → build the prompt → call the text service
//! → parse a list out of the reply. The parsed list is *staged*; it only
//! reaches the tree through [`accept_step`], after the user's edits.

pub mod inference;
pub mod parser;
pub mod prompt;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inference::{infer, InferenceOutcome, InferencePolicy};
pub use parser::{parse_structured, render_numbered, Unparseable};
pub use prompt::{context_sections, ContextExcerpt, ContextMode, PromptTemplates};

use crate::index::{query, EmbeddingProvider, EntryKind, IndexError, VectorStore};
use crate::ingestion::{DocumentId, DocumentSource};
use crate::model::{
    name_key, DegradationInfluence, DegradationMechanism, FailureLocation, FmeaTree, GenerationStep, NodeId, Origin,
    PreventiveTask, ProvenanceTag, Study,
};
use crate::service::{CompletionRequest, TextService};

const REFORMAT_INSTRUCTION: &str = "Rewrite the following answer as a numbered list, one item per line, \
written as \"1. item\". Keep the items exactly as written and add nothing else.";

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("step order violation at {step}: {reason}")]
    StepOrderViolation { step: GenerationStep, reason: String },
    #[error("invalid parent: {0}")]
    InvalidParent(String),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("unknown document `{0}`")]
    UnknownDocument(DocumentId),
    #[error("text service unavailable after {attempts} attempt(s): {message}")]
    ServiceUnavailable { attempts: u32, message: String },
    #[error("text service timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("response could not be parsed into a list")]
    Unparseable { raw_response: String },
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] IndexError),
}

impl GenerationError {
    /// Stable machine code, shared with the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            GenerationError::StepOrderViolation { .. } => "STEP_ORDER_VIOLATION",
            GenerationError::InvalidParent(_) | GenerationError::ValidationFailed(_) => "VALIDATION_FAILED",
            GenerationError::UnknownNode(_) | GenerationError::UnknownDocument(_) => "NOT_FOUND",
            GenerationError::ServiceUnavailable { .. }
            | GenerationError::Timeout { .. }
            | GenerationError::Retrieval(_) => "SERVICE_UNAVAILABLE",
            GenerationError::Unparseable { .. } => "UNPARSEABLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub step: GenerationStep,
    pub system_instruction: String,
    pub user_content: String,
    pub context_refs: Vec<String>,
    pub context_mode: ContextMode,
}

/// A parsed list awaiting review. Nothing is committed until accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStepResult {
    pub step: GenerationStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_node_id: Option<NodeId>,
    pub items: Vec<String>,
    pub raw_response: String,
    #[serde(default)]
    pub context_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    AddItem,
    RemoveItem,
    RenameItem,
}

/// A user edit applied while accepting a staged result.
///
/// `target` names a staged item (by text, case-insensitive) or an already
/// committed sibling under the same parent (by node id or name).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_text: Option<String>,
}

impl EditOp {
    pub fn add(text: impl Into<String>) -> Self {
        Self { kind: EditKind::AddItem, target: None, new_text: Some(text.into()) }
    }

    pub fn remove(target: impl Into<String>) -> Self {
        Self { kind: EditKind::RemoveItem, target: Some(target.into()), new_text: None }
    }

    pub fn rename(target: impl Into<String>, text: impl Into<String>) -> Self {
        Self { kind: EditKind::RenameItem, target: Some(target.into()), new_text: Some(text.into()) }
    }

    fn validate(&self) -> Result<(), GenerationError> {
        let has_text = self.new_text.as_deref().is_some_and(|t| !t.trim().is_empty());
        let has_target = self.target.as_deref().is_some_and(|t| !t.trim().is_empty());
        let ok = match self.kind {
            EditKind::AddItem => has_text,
            EditKind::RemoveItem => has_target,
            EditKind::RenameItem => has_text && has_target,
        };
        if ok {
            Ok(())
        } else {
            Err(GenerationError::ValidationFailed(format!("{:?} edit is missing its target or text", self.kind)))
        }
    }
}

/// Everything a step needs from the outside world.
#[derive(Clone)]
pub struct GenerationServices {
    pub text: Arc<dyn TextService>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub store: Arc<VectorStore>,
    pub documents: Arc<dyn DocumentSource>,
    pub templates: Arc<PromptTemplates>,
    pub policy: InferencePolicy,
    /// Retry once with a reformatting prompt when a reply cannot be parsed.
    pub reformat_retry: bool,
}

impl GenerationServices {
    pub fn new(
        text: Arc<dyn TextService>,
        embedder: Arc<dyn EmbeddingProvider>,
        store: Arc<VectorStore>,
        documents: Arc<dyn DocumentSource>,
    ) -> Self {
        Self {
            text,
            embedder,
            store,
            documents,
            templates: Arc::new(PromptTemplates::builtin()),
            policy: InferencePolicy::default(),
            reformat_retry: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    pub step: GenerationStep,
    #[serde(default)]
    pub parent_node_id: Option<NodeId>,
    #[serde(default)]
    pub mode: ContextMode,
}

/// Checks that `step` may run now: not beyond the study's current level,
/// the level above has committed nodes, and the parent (when the level
/// needs one) sits on the level above.
pub fn check_gating(
    study: &Study,
    tree: &FmeaTree,
    step: GenerationStep,
    parent: Option<&NodeId>,
) -> Result<(), GenerationError> {
    if step > study.current_step {
        return Err(GenerationError::StepOrderViolation {
            step,
            reason: format!("study is still at {}", study.current_step),
        });
    }
    if let Some(prev) = step.previous() {
        if tree.level_count(prev) == 0 {
            return Err(GenerationError::StepOrderViolation {
                step,
                reason: format!("no {} have been committed yet", prev.label()),
            });
        }
    }
    match (step.needs_parent(), parent) {
        (false, None) => Ok(()),
        (false, Some(_)) => Err(GenerationError::InvalidParent(format!("{step} takes no parent node"))),
        (true, None) => Err(GenerationError::InvalidParent(format!("{step} needs a parent node"))),
        (true, Some(id)) => match tree.level_of(id) {
            Some(level) if Some(level) == step.previous() => Ok(()),
            Some(level) => Err(GenerationError::InvalidParent(format!(
                "parent `{id}` is a {level} node, {step} needs a {} node",
                step.previous().map_or("", GenerationStep::as_str)
            ))),
            None => Err(GenerationError::UnknownNode(id.clone())),
        },
    }
}

/// Renders the prompt for one step. Deterministic for fixed inputs.
pub fn build_prompt(
    step: GenerationStep,
    study: &Study,
    prior_tree: &FmeaTree,
    parent_node_id: Option<&NodeId>,
    context: &[ContextExcerpt],
    mode: ContextMode,
    templates: &PromptTemplates,
) -> Result<PromptBundle, GenerationError> {
    if let Some(prev) = step.previous() {
        if prior_tree.level_count(prev) == 0 {
            return Err(GenerationError::StepOrderViolation {
                step,
                reason: format!("no {} have been committed yet", prev.label()),
            });
        }
    }
    let path = match parent_node_id {
        Some(id) => prior_tree.path_to(id).ok_or_else(|| GenerationError::UnknownNode(id.clone()))?,
        None => Vec::new(),
    };
    let used: &[ContextExcerpt] = match mode {
        ContextMode::ZeroShot => &[],
        ContextMode::TopK(k) => &context[..context.len().min(k)],
        ContextMode::LongContext => context,
    };
    let context_text = if used.is_empty() {
        prompt::NO_CONTEXT.to_string()
    } else {
        used.iter().map(prompt::fence).collect::<Vec<_>>().join("\n\n")
    };

    let values: HashMap<&str, String> = HashMap::from([
        ("asset_name", study.asset_name.clone()),
        ("asset_description", study.asset_description.trim().to_string()),
        ("main_parts", prior_tree.boundary.main_parts.join(", ")),
        ("parent_path", path.join(" > ")),
        ("parent_name", path.last().cloned().unwrap_or_default()),
        ("context", context_text),
    ]);
    let template = templates.get(step);
    Ok(PromptBundle {
        step,
        system_instruction: template.system.clone(),
        user_content: template.render_user(&values),
        context_refs: used.iter().map(|e| e.entry_id.clone()).collect(),
        context_mode: mode,
    })
}

/// Query text for retrieval: the asset description plus the parent path.
pub fn retrieval_query(study: &Study, tree: &FmeaTree, parent: Option<&NodeId>) -> String {
    let mut q = study.asset_description.trim().to_string();
    if q.is_empty() {
        q = study.asset_name.clone();
    }
    if let Some(path) = parent.and_then(|p| tree.path_to(p)) {
        q.push('\n');
        q.push_str(&path.join(" > "));
    }
    q
}

fn gather_context(
    study: &Study,
    tree: &FmeaTree,
    request: &StepRequest,
    services: &GenerationServices,
) -> Result<Vec<ContextExcerpt>, GenerationError> {
    match request.mode {
        ContextMode::ZeroShot => Ok(Vec::new()),
        ContextMode::TopK(k) => {
            let filter: &BTreeSet<DocumentId> = &study.selected_document_ids;
            let q = retrieval_query(study, tree, request.parent_node_id.as_ref());
            let hits = query(&q, k, Some(filter), services.embedder.as_ref(), &services.store)?;
            Ok(hits
                .into_iter()
                .map(|h| ContextExcerpt {
                    entry_id: h.entry_id,
                    kind: match h.kind {
                        EntryKind::Chunk => "chunk".into(),
                        EntryKind::Table => "table".into(),
                    },
                    text: h.payload,
                })
                .collect())
        }
        ContextMode::LongContext => study
            .selected_document_ids
            .iter()
            .map(|id| {
                services
                    .documents
                    .processed_text(id)
                    .map(|text| ContextExcerpt { entry_id: id.to_string(), kind: "document".into(), text })
                    .ok_or_else(|| GenerationError::UnknownDocument(id.clone()))
            })
            .collect(),
    }
}

/// Runs one generation step and returns a staged result.
pub fn run_step(
    study: &Study,
    tree: &FmeaTree,
    request: &StepRequest,
    services: &GenerationServices,
) -> Result<GenerationStepResult, GenerationError> {
    check_gating(study, tree, request.step, request.parent_node_id.as_ref())?;
    let context = gather_context(study, tree, request, services)?;
    let bundle = build_prompt(
        request.step,
        study,
        tree,
        request.parent_node_id.as_ref(),
        &context,
        request.mode,
        &services.templates,
    )?;
    let outcome = infer(&bundle, Arc::clone(&services.text), &services.policy)?;

    let items = match parse_structured(&outcome.text, request.step) {
        Ok(items) => items,
        Err(Unparseable) if services.reformat_retry => {
            let retry = CompletionRequest {
                system_instruction: REFORMAT_INSTRUCTION.to_string(),
                user_content: outcome.text.clone(),
                max_output_chars: inference::MAX_OUTPUT_CHARS,
            };
            let second = inference::complete_with_retries(&retry, Arc::clone(&services.text), &services.policy)?;
            parse_structured(&second.text, request.step)
                .map_err(|_| GenerationError::Unparseable { raw_response: outcome.text.clone() })?
        }
        Err(Unparseable) => return Err(GenerationError::Unparseable { raw_response: outcome.text }),
    };

    Ok(GenerationStepResult {
        step: request.step,
        parent_node_id: request.parent_node_id.clone(),
        items,
        raw_response: outcome.text,
        context_refs: bundle.context_refs,
    })
}

#[derive(Debug, Clone)]
struct StagedItem {
    text: String,
    origin: Origin,
}

/// Pulls the functional-overview sentence out of a boundary reply: the
/// first non-list prose line that is not a lead-in ending in a colon.
fn overview_from(raw: &str) -> Option<String> {
    raw.lines()
        .map(str::trim)
        .take_while(|l| parse_structured(l, GenerationStep::Boundary).is_err() || !looks_like_list_line(l))
        .filter(|l| !l.is_empty() && !l.ends_with(':') && !l.starts_with("```"))
        .map(|l| {
            let lower = l.to_lowercase();
            for label in ["functional overview:", "overview:"] {
                if lower.starts_with(label) {
                    return l[label.len()..].trim().to_string();
                }
            }
            l.to_string()
        })
        .find(|l| !l.is_empty())
}

fn looks_like_list_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with(['-', '*', '•', '[']) || t.chars().next().is_some_and(|c| c.is_ascii_digit())
}

/// Applies the user's edits to a staged result and commits it into a copy
/// of `tree`. On success the study advances when `mark_complete` is set and
/// the result is for the study's current level. On error neither the study
/// nor the tree is touched.
pub fn accept_step(
    study: &mut Study,
    tree: &FmeaTree,
    result: &GenerationStepResult,
    edits: &[EditOp],
    mark_complete: bool,
) -> Result<FmeaTree, GenerationError> {
    check_gating(study, tree, result.step, result.parent_node_id.as_ref())?;
    for e in edits {
        e.validate()?;
    }

    let mut staged: Vec<StagedItem> =
        result.items.iter().map(|t| StagedItem { text: t.trim().to_string(), origin: Origin::Generated }).collect();
    let mut next = tree.clone();
    let parent = result.parent_node_id.as_ref();

    for edit in edits {
        let target = edit.target.as_deref().map(str::trim);
        let new_text = edit.new_text.as_deref().map(str::trim);
        let staged_pos = target.and_then(|t| staged.iter().position(|s| name_key(&s.text) == name_key(t)));
        match (edit.kind, staged_pos) {
            (EditKind::AddItem, _) => {
                staged.push(StagedItem { text: new_text.unwrap_or_default().to_string(), origin: Origin::UserAdded })
            }
            (EditKind::RemoveItem, Some(pos)) => {
                staged.remove(pos);
            }
            (EditKind::RenameItem, Some(pos)) => {
                let item = &mut staged[pos];
                item.text = new_text.unwrap_or_default().to_string();
                if item.origin == Origin::Generated {
                    item.origin = Origin::UserEdited;
                }
            }
            (kind, None) => edit_committed(&mut next, result.step, parent, kind, target.unwrap_or_default(), new_text)?,
        }
    }

    let generated_tag = |origin: Origin| match origin {
        Origin::UserAdded => ProvenanceTag::user_added(),
        other => ProvenanceTag { origin: other, source_chunk_ids: result.context_refs.clone() },
    };

    match result.step {
        GenerationStep::Boundary => {
            next.boundary.main_parts = staged.into_iter().map(|s| s.text).collect();
            next.boundary.functional_overview =
                overview_from(&result.raw_response).unwrap_or_else(|| study.asset_description.trim().to_string());
        }
        GenerationStep::FailureLocations => {
            next.locations.extend(staged.into_iter().map(|s| FailureLocation {
                node_id: NodeId::generate(),
                name: s.text,
                mechanisms: Vec::new(),
                provenance: generated_tag(s.origin),
            }));
        }
        GenerationStep::DegradationMechanisms => {
            let loc = parent.and_then(|p| next.find_location_mut(p)).ok_or_else(missing_parent)?;
            loc.mechanisms.extend(staged.into_iter().map(|s| DegradationMechanism {
                node_id: NodeId::generate(),
                name: s.text,
                influences: Vec::new(),
                provenance: generated_tag(s.origin),
            }));
        }
        GenerationStep::DegradationInfluences => {
            let mech = parent.and_then(|p| next.find_mechanism_mut(p)).ok_or_else(missing_parent)?;
            mech.influences.extend(staged.into_iter().map(|s| DegradationInfluence {
                node_id: NodeId::generate(),
                name: s.text,
                tasks: Vec::new(),
                provenance: generated_tag(s.origin),
            }));
        }
        GenerationStep::PreventiveTasks => {
            let infl = parent.and_then(|p| next.find_influence_mut(p)).ok_or_else(missing_parent)?;
            infl.tasks.extend(staged.into_iter().map(|s| PreventiveTask {
                node_id: NodeId::generate(),
                description: s.text,
                provenance: generated_tag(s.origin),
            }));
        }
    }

    next.validate().map_err(|e| GenerationError::ValidationFailed(e.to_string()))?;
    if mark_complete && result.step == study.current_step {
        study.advance();
    }
    Ok(next)
}

fn missing_parent() -> GenerationError {
    GenerationError::InvalidParent("parent node is no longer in the tree".into())
}

/// Edits an already committed sibling under `parent` at `step`.
fn edit_committed(
    tree: &mut FmeaTree,
    step: GenerationStep,
    parent: Option<&NodeId>,
    kind: EditKind,
    target: &str,
    new_text: Option<&str>,
) -> Result<(), GenerationError> {
    let not_found = || GenerationError::ValidationFailed(format!("no item `{target}` to edit"));
    let matches = |id: &NodeId, name: &str| id.as_str() == target || name_key(name) == name_key(target);

    macro_rules! edit_list {
        ($list:expr, $name:ident) => {{
            let list = $list;
            let pos = list.iter().position(|n| matches(&n.node_id, &n.$name)).ok_or_else(not_found)?;
            match kind {
                EditKind::RemoveItem => {
                    list.remove(pos);
                }
                EditKind::RenameItem => {
                    let node = &mut list[pos];
                    node.$name = new_text.unwrap_or_default().to_string();
                    if node.provenance.origin == Origin::Generated {
                        node.provenance.origin = Origin::UserEdited;
                    }
                }
                EditKind::AddItem => unreachable!("adds never target committed nodes"),
            }
            Ok(())
        }};
    }

    match step {
        GenerationStep::Boundary => {
            let parts = &mut tree.boundary.main_parts;
            let pos = parts.iter().position(|p| name_key(p) == name_key(target)).ok_or_else(not_found)?;
            match kind {
                EditKind::RemoveItem => {
                    parts.remove(pos);
                }
                _ => parts[pos] = new_text.unwrap_or_default().to_string(),
            }
            Ok(())
        }
        GenerationStep::FailureLocations => edit_list!(&mut tree.locations, name),
        GenerationStep::DegradationMechanisms => {
            let loc = parent.and_then(|p| tree.find_location_mut(p)).ok_or_else(missing_parent)?;
            edit_list!(&mut loc.mechanisms, name)
        }
        GenerationStep::DegradationInfluences => {
            let mech = parent.and_then(|p| tree.find_mechanism_mut(p)).ok_or_else(missing_parent)?;
            edit_list!(&mut mech.influences, name)
        }
        GenerationStep::PreventiveTasks => {
            let infl = parent.and_then(|p| tree.find_influence_mut(p)).ok_or_else(missing_parent)?;
            edit_list!(&mut infl.tasks, description)
        }
    }
}
