//! FMEA domain model.
//!
//! A study produces a tree five levels deep:
//!
//! ```text
//! Boundary
//! └── FailureLocation
//!     └── DegradationMechanism
//!         └── DegradationInfluence      (location, mechanism, influence) = failure mode
//!             └── PreventiveTask
//! ```
//!
//! Every level below the boundary is one-to-many. The tree is a plain value;
//! edits go through [`crate::generation::accept_step`], which returns a
//! validated replacement.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::DocumentId;

/// Opaque node identifier, assigned once at creation and never reused.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn generate() -> Self {
        Self(uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudyId(String);

impl StudyId {
    pub fn generate() -> Self {
        Self(uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StudyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The five generation levels, in the only order they may be produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStep {
    Boundary,
    FailureLocations,
    DegradationMechanisms,
    DegradationInfluences,
    PreventiveTasks,
}

impl GenerationStep {
    pub const ALL: [GenerationStep; 5] = [
        GenerationStep::Boundary,
        GenerationStep::FailureLocations,
        GenerationStep::DegradationMechanisms,
        GenerationStep::DegradationInfluences,
        GenerationStep::PreventiveTasks,
    ];

    /// Successor in the fixed order; `None` after `PreventiveTasks`.
    pub fn next(self) -> Option<Self> {
        let i = self.index();
        Self::ALL.get(i + 1).copied()
    }

    pub fn previous(self) -> Option<Self> {
        let i = self.index();
        i.checked_sub(1).map(|p| Self::ALL[p])
    }

    /// Zero-based depth of the level (boundary = 0).
    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether generating this level needs a parent node picked by the user.
    pub fn needs_parent(self) -> bool {
        self >= GenerationStep::DegradationMechanisms
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GenerationStep::Boundary => "boundary",
            GenerationStep::FailureLocations => "failure_locations",
            GenerationStep::DegradationMechanisms => "degradation_mechanisms",
            GenerationStep::DegradationInfluences => "degradation_influences",
            GenerationStep::PreventiveTasks => "preventive_tasks",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GenerationStep::Boundary => "boundary",
            GenerationStep::FailureLocations => "failure locations",
            GenerationStep::DegradationMechanisms => "degradation mechanisms",
            GenerationStep::DegradationInfluences => "degradation influences",
            GenerationStep::PreventiveTasks => "preventive maintenance tasks",
        }
    }
}

/// Free function form of [`GenerationStep::next`].
pub fn next_step(step: GenerationStep) -> Option<GenerationStep> {
    step.next()
}

impl fmt::Display for GenerationStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("unknown generation step `{0}`")]
pub struct UnknownStep(pub String);

impl FromStr for GenerationStep {
    type Err = UnknownStep;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|step| step.as_str() == norm)
            .ok_or_else(|| UnknownStep(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Generated,
    UserAdded,
    UserEdited,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Generated => "generated",
            Origin::UserAdded => "user_added",
            Origin::UserEdited => "user_edited",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "generated" => Some(Origin::Generated),
            "user_added" => Some(Origin::UserAdded),
            "user_edited" => Some(Origin::UserEdited),
            _ => None,
        }
    }
}

/// Audit trail for a node: who produced it and which retrieved entries it
/// was grounded on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceTag {
    pub origin: Origin,
    #[serde(default)]
    pub source_chunk_ids: Vec<String>,
}

impl ProvenanceTag {
    pub fn generated(source_chunk_ids: Vec<String>) -> Self {
        Self { origin: Origin::Generated, source_chunk_ids }
    }

    pub fn user_added() -> Self {
        Self { origin: Origin::UserAdded, source_chunk_ids: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Boundary {
    pub functional_overview: String,
    pub main_parts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureLocation {
    pub node_id: NodeId,
    pub name: String,
    #[serde(default)]
    pub mechanisms: Vec<DegradationMechanism>,
    pub provenance: ProvenanceTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegradationMechanism {
    pub node_id: NodeId,
    pub name: String,
    #[serde(default)]
    pub influences: Vec<DegradationInfluence>,
    pub provenance: ProvenanceTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegradationInfluence {
    pub node_id: NodeId,
    pub name: String,
    #[serde(default)]
    pub tasks: Vec<PreventiveTask>,
    pub provenance: ProvenanceTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreventiveTask {
    pub node_id: NodeId,
    pub description: String,
    pub provenance: ProvenanceTag,
}

/// A (location, mechanism, influence) path. Derived, never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureMode {
    pub location_ref: NodeId,
    pub mechanism_ref: NodeId,
    pub influence_ref: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FmeaTree {
    pub boundary: Boundary,
    #[serde(default)]
    pub locations: Vec<FailureLocation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(NodeId),
    #[error("empty name at {level}")]
    EmptyName { level: GenerationStep },
    #[error("duplicate sibling `{name}` at {level}")]
    DuplicateSibling { level: GenerationStep, name: String },
    #[error("node `{node}` at {level} has parent at the wrong level")]
    LevelSkip { node: NodeId, level: GenerationStep },
    #[error("node `{node}` refers to missing parent `{parent}`")]
    MissingParent { node: NodeId, parent: NodeId },
}

/// Normalized form used for case-insensitive sibling comparison.
pub fn name_key(name: &str) -> String {
    name.trim().to_lowercase()
}

fn check_siblings<'a>(
    level: GenerationStep,
    names: impl Iterator<Item = &'a str>,
) -> Result<(), TreeError> {
    let mut seen = HashSet::new();
    for name in names {
        let key = name_key(name);
        if key.is_empty() {
            return Err(TreeError::EmptyName { level });
        }
        if !seen.insert(key) {
            return Err(TreeError::DuplicateSibling { level, name: name.trim().to_string() });
        }
    }
    Ok(())
}

impl FmeaTree {
    pub fn new(boundary: Boundary) -> Self {
        Self { boundary, locations: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.main_parts.is_empty() && self.locations.is_empty()
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        check_siblings(GenerationStep::Boundary, self.boundary.main_parts.iter().map(String::as_str))?;

        let mut ids = HashSet::new();
        let mut claim = |id: &NodeId| {
            if ids.insert(id.clone()) {
                Ok(())
            } else {
                Err(TreeError::DuplicateNodeId(id.clone()))
            }
        };

        check_siblings(GenerationStep::FailureLocations, self.locations.iter().map(|l| l.name.as_str()))?;
        for loc in &self.locations {
            claim(&loc.node_id)?;
            check_siblings(
                GenerationStep::DegradationMechanisms,
                loc.mechanisms.iter().map(|m| m.name.as_str()),
            )?;
            for mech in &loc.mechanisms {
                claim(&mech.node_id)?;
                check_siblings(
                    GenerationStep::DegradationInfluences,
                    mech.influences.iter().map(|i| i.name.as_str()),
                )?;
                for infl in &mech.influences {
                    claim(&infl.node_id)?;
                    for task in &infl.tasks {
                        claim(&task.node_id)?;
                        if task.description.trim().is_empty() {
                            return Err(TreeError::EmptyName { level: GenerationStep::PreventiveTasks });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of committed nodes at a level. The boundary counts its parts.
    pub fn level_count(&self, step: GenerationStep) -> usize {
        let mechs = || self.locations.iter().flat_map(|l| &l.mechanisms);
        let infls = || mechs().flat_map(|m| &m.influences);
        match step {
            GenerationStep::Boundary => self.boundary.main_parts.len(),
            GenerationStep::FailureLocations => self.locations.len(),
            GenerationStep::DegradationMechanisms => mechs().count(),
            GenerationStep::DegradationInfluences => infls().count(),
            GenerationStep::PreventiveTasks => infls().map(|i| i.tasks.len()).sum(),
        }
    }

    /// Level of the node with this id, if present.
    pub fn level_of(&self, id: &NodeId) -> Option<GenerationStep> {
        self.flatten().into_iter().find(|n| &n.node_id == id).map(|n| n.level)
    }

    /// Names from the first level down to the given node, e.g.
    /// `["Bearing", "Fatigue"]` for a mechanism under a location.
    pub fn path_to(&self, id: &NodeId) -> Option<Vec<String>> {
        for loc in &self.locations {
            if &loc.node_id == id {
                return Some(vec![loc.name.clone()]);
            }
            for mech in &loc.mechanisms {
                if &mech.node_id == id {
                    return Some(vec![loc.name.clone(), mech.name.clone()]);
                }
                for infl in &mech.influences {
                    if &infl.node_id == id {
                        return Some(vec![loc.name.clone(), mech.name.clone(), infl.name.clone()]);
                    }
                }
            }
        }
        None
    }

    pub fn find_location_mut(&mut self, id: &NodeId) -> Option<&mut FailureLocation> {
        self.locations.iter_mut().find(|l| &l.node_id == id)
    }

    pub fn find_mechanism_mut(&mut self, id: &NodeId) -> Option<&mut DegradationMechanism> {
        self.locations.iter_mut().flat_map(|l| l.mechanisms.iter_mut()).find(|m| &m.node_id == id)
    }

    pub fn find_influence_mut(&mut self, id: &NodeId) -> Option<&mut DegradationInfluence> {
        self.locations
            .iter_mut()
            .flat_map(|l| l.mechanisms.iter_mut())
            .flat_map(|m| m.influences.iter_mut())
            .find(|i| &i.node_id == id)
    }

    /// Flat parent-pointer view, in depth-first tree order.
    pub fn flatten(&self) -> Vec<FlatNode> {
        let mut out = Vec::new();
        for (lp, loc) in self.locations.iter().enumerate() {
            out.push(FlatNode {
                node_id: loc.node_id.clone(),
                parent_id: None,
                level: GenerationStep::FailureLocations,
                position: lp,
                text: loc.name.clone(),
                provenance: loc.provenance.clone(),
            });
            for (mp, mech) in loc.mechanisms.iter().enumerate() {
                out.push(FlatNode {
                    node_id: mech.node_id.clone(),
                    parent_id: Some(loc.node_id.clone()),
                    level: GenerationStep::DegradationMechanisms,
                    position: mp,
                    text: mech.name.clone(),
                    provenance: mech.provenance.clone(),
                });
                for (ip, infl) in mech.influences.iter().enumerate() {
                    out.push(FlatNode {
                        node_id: infl.node_id.clone(),
                        parent_id: Some(mech.node_id.clone()),
                        level: GenerationStep::DegradationInfluences,
                        position: ip,
                        text: infl.name.clone(),
                        provenance: infl.provenance.clone(),
                    });
                    for (tp, task) in infl.tasks.iter().enumerate() {
                        out.push(FlatNode {
                            node_id: task.node_id.clone(),
                            parent_id: Some(infl.node_id.clone()),
                            level: GenerationStep::PreventiveTasks,
                            position: tp,
                            text: task.description.clone(),
                            provenance: task.provenance.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    /// Rebuilds a tree from parent-pointer rows. Rejects rows whose parent is
    /// missing or sits anywhere other than the level immediately above.
    pub fn from_flat(boundary: Boundary, nodes: Vec<FlatNode>) -> Result<Self, TreeError> {
        use std::collections::HashMap;

        let mut levels: HashMap<NodeId, GenerationStep> = HashMap::new();
        for n in &nodes {
            if n.level == GenerationStep::Boundary {
                return Err(TreeError::LevelSkip { node: n.node_id.clone(), level: n.level });
            }
            if levels.insert(n.node_id.clone(), n.level).is_some() {
                return Err(TreeError::DuplicateNodeId(n.node_id.clone()));
            }
        }
        for n in &nodes {
            let expected_parent = n.level.previous().filter(|p| *p != GenerationStep::Boundary);
            match (&n.parent_id, expected_parent) {
                (None, None) => {}
                (Some(parent), Some(want)) => match levels.get(parent) {
                    Some(level) if *level == want => {}
                    Some(_) => return Err(TreeError::LevelSkip { node: n.node_id.clone(), level: n.level }),
                    None => {
                        return Err(TreeError::MissingParent { node: n.node_id.clone(), parent: parent.clone() })
                    }
                },
                _ => return Err(TreeError::LevelSkip { node: n.node_id.clone(), level: n.level }),
            }
        }

        let mut children: HashMap<Option<NodeId>, Vec<FlatNode>> = HashMap::new();
        for n in nodes {
            children.entry(n.parent_id.clone()).or_default().push(n);
        }
        for list in children.values_mut() {
            list.sort_by_key(|n| n.position);
        }
        let mut take = |parent: Option<&NodeId>| children.remove(&parent.cloned()).unwrap_or_default();

        let mut tree = FmeaTree::new(boundary);
        for loc in take(None) {
            let mut location = FailureLocation {
                node_id: loc.node_id,
                name: loc.text,
                mechanisms: Vec::new(),
                provenance: loc.provenance,
            };
            for mech in take(Some(&location.node_id)) {
                let mut mechanism = DegradationMechanism {
                    node_id: mech.node_id,
                    name: mech.text,
                    influences: Vec::new(),
                    provenance: mech.provenance,
                };
                for infl in take(Some(&mechanism.node_id)) {
                    let mut influence = DegradationInfluence {
                        node_id: infl.node_id,
                        name: infl.text,
                        tasks: Vec::new(),
                        provenance: infl.provenance,
                    };
                    influence.tasks = take(Some(&influence.node_id))
                        .into_iter()
                        .map(|t| PreventiveTask { node_id: t.node_id, description: t.text, provenance: t.provenance })
                        .collect();
                    mechanism.influences.push(influence);
                }
                location.mechanisms.push(mechanism);
            }
            tree.locations.push(location);
        }
        tree.validate()?;
        Ok(tree)
    }
}

/// One node of the tree in parent-pointer form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatNode {
    pub node_id: NodeId,
    /// `None` for failure locations, which hang off the boundary.
    pub parent_id: Option<NodeId>,
    pub level: GenerationStep,
    pub position: usize,
    pub text: String,
    pub provenance: ProvenanceTag,
}

/// One failure mode per degradation influence, depth-first.
pub fn derive_failure_modes(tree: &FmeaTree) -> Vec<FailureMode> {
    tree.locations
        .iter()
        .flat_map(|loc| {
            loc.mechanisms.iter().flat_map(move |mech| {
                mech.influences.iter().map(move |infl| FailureMode {
                    location_ref: loc.node_id.clone(),
                    mechanism_ref: mech.node_id.clone(),
                    influence_ref: infl.node_id.clone(),
                })
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StudyError {
    #[error("asset name must not be empty")]
    EmptyAssetName,
}

/// One FMEA study for one asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Study {
    pub study_id: StudyId,
    pub asset_name: String,
    pub asset_description: String,
    pub selected_document_ids: BTreeSet<DocumentId>,
    pub current_step: GenerationStep,
    pub created_at: DateTime<Utc>,
}

impl Study {
    pub fn new(
        asset_name: impl Into<String>,
        asset_description: impl Into<String>,
        selected_document_ids: impl IntoIterator<Item = DocumentId>,
    ) -> Result<Self, StudyError> {
        let asset_name = asset_name.into().trim().to_string();
        if asset_name.is_empty() {
            return Err(StudyError::EmptyAssetName);
        }
        Ok(Self {
            study_id: StudyId::generate(),
            asset_name,
            asset_description: asset_description.into(),
            selected_document_ids: selected_document_ids.into_iter().collect(),
            current_step: GenerationStep::Boundary,
            created_at: Utc::now(),
        })
    }

    /// Moves to the next level. Returns `false` when already at the last one.
    pub fn advance(&mut self) -> bool {
        match self.current_step.next() {
            Some(next) => {
                self.current_step = next;
                true
            }
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(name: &str) -> (NodeId, String, ProvenanceTag) {
        (NodeId::generate(), name.to_string(), ProvenanceTag::generated(vec![]))
    }

    fn sample_tree(locs: usize, mechs: usize, infls: usize) -> FmeaTree {
        let mut tree = FmeaTree::new(Boundary {
            functional_overview: "moves air".into(),
            main_parts: vec!["Fan".into()],
        });
        for l in 0..locs {
            let (id, name, provenance) = node(&format!("loc{l}"));
            let mut loc = FailureLocation { node_id: id, name, mechanisms: vec![], provenance };
            for m in 0..mechs {
                let (id, name, provenance) = node(&format!("mech{m}"));
                let mut mech = DegradationMechanism { node_id: id, name, influences: vec![], provenance };
                for i in 0..infls {
                    let (id, name, provenance) = node(&format!("infl{i}"));
                    mech.influences.push(DegradationInfluence { node_id: id, name, tasks: vec![], provenance });
                }
                loc.mechanisms.push(mech);
            }
            tree.locations.push(loc);
        }
        tree
    }

    #[test]
    fn empty_tree_has_no_failure_modes() {
        assert!(derive_failure_modes(&FmeaTree::default()).is_empty());
    }

    #[test]
    fn two_influences_share_location_and_mechanism() {
        let tree = sample_tree(1, 1, 2);
        let modes = derive_failure_modes(&tree);
        assert_eq!(modes.len(), 2);
        assert_eq!(modes[0].location_ref, modes[1].location_ref);
        assert_eq!(modes[0].mechanism_ref, modes[1].mechanism_ref);
        assert_ne!(modes[0].influence_ref, modes[1].influence_ref);
    }

    #[test]
    fn failure_modes_match_path_enumeration() {
        let tree = sample_tree(2, 2, 2);
        // enumerate every root-to-influence path through the flat view
        let flat = tree.flatten();
        let parent_of = |id: &NodeId| flat.iter().find(|n| &n.node_id == id).and_then(|n| n.parent_id.clone());
        let mut paths = Vec::new();
        for n in flat.iter().filter(|n| n.level == GenerationStep::DegradationInfluences) {
            let mech = parent_of(&n.node_id).unwrap();
            let loc = parent_of(&mech).unwrap();
            paths.push((loc, mech, n.node_id.clone()));
        }
        assert_eq!(paths.len(), 8);
        let modes: Vec<_> = derive_failure_modes(&tree)
            .into_iter()
            .map(|m| (m.location_ref, m.mechanism_ref, m.influence_ref))
            .collect();
        assert_eq!(modes, paths);
    }

    #[test]
    fn next_step_walks_all_levels_once() {
        assert_eq!(next_step(GenerationStep::Boundary), Some(GenerationStep::FailureLocations));
        assert_eq!(
            next_step(GenerationStep::DegradationInfluences),
            Some(GenerationStep::PreventiveTasks)
        );
        assert_eq!(next_step(GenerationStep::PreventiveTasks), None);

        let mut seen = vec![GenerationStep::Boundary];
        while let Some(n) = next_step(*seen.last().unwrap()) {
            seen.push(n);
        }
        assert_eq!(seen, GenerationStep::ALL.to_vec());
    }

    #[test]
    fn step_round_trips_through_str() {
        for step in GenerationStep::ALL {
            assert_eq!(step.as_str().parse::<GenerationStep>().unwrap(), step);
        }
        assert_eq!("failure-locations".parse::<GenerationStep>().unwrap(), GenerationStep::FailureLocations);
        assert!("roots".parse::<GenerationStep>().is_err());
    }

    #[test]
    fn sibling_names_compare_trimmed_and_case_insensitive() {
        let mut tree = sample_tree(2, 0, 0);
        tree.locations[1].name = "  LOC0 ".into();
        assert!(matches!(tree.validate(), Err(TreeError::DuplicateSibling { .. })));
    }

    #[test]
    fn same_name_under_different_parents_is_fine() {
        let tree = sample_tree(2, 2, 1);
        tree.validate().unwrap();
    }

    #[test]
    fn duplicate_node_ids_rejected() {
        let mut tree = sample_tree(1, 2, 0);
        let id = tree.locations[0].node_id.clone();
        tree.locations[0].mechanisms[1].node_id = id.clone();
        assert_eq!(tree.validate(), Err(TreeError::DuplicateNodeId(id)));
    }

    #[test]
    fn boundary_parts_must_be_unique() {
        let mut tree = FmeaTree::default();
        tree.boundary.main_parts = vec!["Fan".into(), "fan".into()];
        assert!(tree.validate().is_err());
        tree.boundary.main_parts = vec!["Fan".into(), " ".into()];
        assert!(tree.validate().is_err());
    }

    #[test]
    fn flat_round_trip_preserves_everything() {
        let mut tree = sample_tree(2, 2, 2);
        let id = NodeId::generate();
        tree.locations[1].mechanisms[0].influences[1].tasks.push(PreventiveTask {
            node_id: id,
            description: "Inspect quarterly".into(),
            provenance: ProvenanceTag::user_added(),
        });
        let rebuilt = FmeaTree::from_flat(tree.boundary.clone(), tree.flatten()).unwrap();
        assert_eq!(rebuilt, tree);
    }

    #[test]
    fn from_flat_rejects_depth_skip() {
        let tree = sample_tree(1, 1, 1);
        let mut flat = tree.flatten();
        // reattach the influence directly under the location
        flat[2].parent_id = Some(flat[0].node_id.clone());
        assert!(matches!(
            FmeaTree::from_flat(Boundary::default(), flat),
            Err(TreeError::LevelSkip { .. })
        ));
    }

    #[test]
    fn from_flat_rejects_orphans() {
        let tree = sample_tree(1, 1, 0);
        let mut flat = tree.flatten();
        flat[1].parent_id = Some(NodeId::new("ghost"));
        assert!(matches!(
            FmeaTree::from_flat(Boundary::default(), flat),
            Err(TreeError::MissingParent { .. })
        ));
    }

    #[test]
    fn study_requires_asset_name() {
        assert_eq!(Study::new("  ", "desc", []), Err(StudyError::EmptyAssetName));
        let mut study = Study::new("Pump", "desc", []).unwrap();
        assert_eq!(study.current_step, GenerationStep::Boundary);
        for _ in 0..4 {
            assert!(study.advance());
        }
        assert!(!study.advance());
        assert_eq!(study.current_step, GenerationStep::PreventiveTasks);
    }

    #[test]
    fn canonical_json_uses_declared_field_names() {
        let tree = sample_tree(1, 1, 1);
        let json = serde_json::to_value(&tree).unwrap();
        assert!(json["boundary"]["functional_overview"].is_string());
        assert!(json["locations"][0]["mechanisms"][0]["influences"][0]["tasks"].is_array());
        assert_eq!(json["locations"][0]["provenance"]["origin"], "generated");
        let back: FmeaTree = serde_json::from_value(json).unwrap();
        assert_eq!(back, tree);
    }
}
