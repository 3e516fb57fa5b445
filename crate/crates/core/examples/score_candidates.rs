//! Scores one generated list of failure locations against a reference list
//! with threshold-based semantic matching, and shows which pairs matched.
//!
//!     cargo run -p fmea-core --example score_candidates

use fmea_core::evaluation::{similarity_matrix, ssee_match, ssee_precision_recall, DEFAULT_THRESHOLD};
use fmea_core::index::HashEmbedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let candidates = ["Supply fan bearing", "cooling coil", "Drain pan", "Control cabinet"];
    let gold = ["Supply fan bearing", "Cooling coil", "Condensate drain pan", "Filter bank", "Damper actuator"];
    let embedder = HashEmbedder::default();

    let sim = similarity_matrix(&candidates, &gold, &embedder)?;
    for (c, row) in candidates.iter().zip(&sim) {
        let cells: Vec<String> = row.iter().map(|s| format!("{s:.2}")).collect();
        println!("{c:<20} {}", cells.join(" "));
    }

    for threshold in [DEFAULT_THRESHOLD, 0.9] {
        println!("\nthreshold {threshold}:");
        for m in ssee_match(&candidates, &gold, threshold, &embedder)? {
            println!("  {} <-> {} ({:.2})", candidates[m.candidate_index], gold[m.gold_index], m.similarity);
        }
        let score = ssee_precision_recall(&candidates, &gold, threshold, &embedder)?;
        println!("  precision {:.2}, recall {:.2}", score.precision, score.recall);
    }
    Ok(())
}
