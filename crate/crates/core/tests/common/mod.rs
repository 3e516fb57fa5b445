//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fmea_core::model::{
    Boundary, DegradationInfluence, DegradationMechanism, FailureLocation, FmeaTree, NodeId, Origin, PreventiveTask,
    ProvenanceTag,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

const WORDS: [&str; 16] = [
    "bearing", "seal", "shaft", "coupling", "impeller", "casing", "valve", "filter", "belt", "gear", "winding",
    "nozzle", "hose", "sensor", "bracket", "gasket",
];

fn provenance(rng: &mut impl Rng) -> ProvenanceTag {
    let origin = *[Origin::Generated, Origin::UserAdded, Origin::UserEdited].choose(rng).unwrap();
    let source_chunk_ids = if origin == Origin::UserAdded {
        Vec::new()
    } else {
        let n = rng.gen_range(0..4);
        (0..n).map(|i| format!("doc{}#c{:04}", rng.gen_range(0..3), i)).collect()
    };
    ProvenanceTag { origin, source_chunk_ids }
}

/// `n` sibling names, unique case-insensitively, in a random mix of case.
fn names(rng: &mut impl Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let w = WORDS.choose(rng).unwrap();
            let name = format!("{w} {i}");
            if rng.gen_bool(0.3) {
                name.to_uppercase()
            } else {
                name
            }
        })
        .collect()
}

/// A random valid tree; every level may be empty.
pub fn random_tree(rng: &mut impl Rng) -> FmeaTree {
    let n = rng.gen_range(0..4);
    let parts = names(rng, n);
    let mut tree = FmeaTree::new(Boundary { functional_overview: format!("overview {}", rng.gen::<u16>()), main_parts: parts });
    let n = rng.gen_range(0..5);
    for name in names(rng, n) {
        let mut loc =
            FailureLocation { node_id: NodeId::generate(), name, mechanisms: Vec::new(), provenance: provenance(rng) };
        let n = rng.gen_range(0..4);
        for name in names(rng, n) {
            let mut mech = DegradationMechanism {
                node_id: NodeId::generate(),
                name,
                influences: Vec::new(),
                provenance: provenance(rng),
            };
            let n = rng.gen_range(0..4);
            for name in names(rng, n) {
                let n_tasks = rng.gen_range(0..4);
                let tasks = (0..n_tasks)
                    .map(|i| PreventiveTask {
                        node_id: NodeId::generate(),
                        description: format!("Inspect, clean, and record item {i}"),
                        provenance: provenance(rng),
                    })
                    .collect();
                mech.influences.push(DegradationInfluence {
                    node_id: NodeId::generate(),
                    name,
                    tasks,
                    provenance: provenance(rng),
                });
            }
            loc.mechanisms.push(mech);
        }
        tree.locations.push(loc);
    }
    tree.validate().expect("generator builds valid trees");
    tree
}
