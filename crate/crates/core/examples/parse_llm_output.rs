//! Turns free-form model replies into clean item lists. Each reply below is
//! a shape seen from real models; the last one has no list at all.
//!
//!     cargo run -p fmea-core --example parse_llm_output

use fmea_core::generation::{parse_structured, render_numbered};
use fmea_core::model::GenerationStep;

const REPLIES: [(&str, &str); 6] = [
    ("numbered", "Here are the failure locations:\n1. Supply fan\n2) **Cooling coil**\n3. Filter bank (pre-filter and bag filter)"),
    ("bullets", "* Drive belt\n- Motor bearings\n• Damper actuator"),
    ("json", "```json\n{\"items\": [\"Impeller\", \"Mechanical seal\", \"Casing\"]}\n```"),
    ("bare lines", "Impeller\nMechanical seal\nVolute casing"),
    ("labelled", "1. Wear: gradual loss of material at contact surfaces\n2. Corrosion - chemical attack of the casing"),
    ("prose", "I am unable to help with that request without more information about the asset and how it is used."),
];

fn main() {
    for (shape, reply) in REPLIES {
        let step = if shape == "labelled" { GenerationStep::DegradationMechanisms } else { GenerationStep::FailureLocations };
        match parse_structured(reply, step) {
            Ok(items) => {
                println!("{shape}: {items:?}");
                // the canonical form parses back to the same items
                assert_eq!(parse_structured(&render_numbered(&items), step).as_ref(), Ok(&items));
            }
            Err(e) => println!("{shape}: {e}"),
        }
    }
}
