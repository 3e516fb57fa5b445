//! Rule-based extraction of item lists from free-form replies.
//!
//! Grammar families, tried in priority order:
//! 1. numbered lines, `N. text` or `N) text`
//! 2. bullet lines, `- text`, `* text`, `• text`
//! 3. a JSON array of strings anywhere in the reply
//! 4. bare lines, when the reply has at least two lines and none is a
//!    prose line longer than 120 characters
//!
//! The first family that yields an item wins. Items are cleaned (emphasis,
//! quotes, trailing punctuation) and de-duplicated case-insensitively.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::model::{name_key, GenerationStep};

const MAX_BARE_LINE: usize = 120;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no list could be extracted from the response")]
pub struct Unparseable;

fn numbered_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\(?\d{1,3}[.)]\s+(.+?)\s*$").unwrap())
}

fn bullet_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*[-*•]\s+(.+?)\s*$").unwrap())
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(.+?)(?::\s|\s[-–—]\s)").unwrap())
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

pub fn parse_structured(raw_response: &str, step: GenerationStep) -> Result<Vec<String>, Unparseable> {
    // tasks are whole sentences; everything else is a name that may carry a
    // trailing "Name: explanation"
    let split_labels = step != GenerationStep::PreventiveTasks;
    let lines: Vec<&str> = raw_response.lines().filter(|l| !is_fence(l)).collect();

    let from_lines = |re: &Regex| -> Vec<String> {
        lines.iter().filter_map(|l| re.captures(l)).map(|c| c[1].to_string()).collect()
    };

    let candidates = [
        from_lines(numbered_re()),
        from_lines(bullet_re()),
        json_array(raw_response),
        bare_lines(&lines),
    ];
    for raw_items in candidates {
        let items = finish(raw_items, split_labels);
        if !items.is_empty() {
            return Ok(items);
        }
    }
    Err(Unparseable)
}

fn json_array(raw: &str) -> Vec<String> {
    for (i, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Vec<serde_json::Value>>();
        if let Some(Ok(values)) = stream.next() {
            let strings: Vec<String> = values.iter().filter_map(|v| v.as_str().map(str::to_string)).collect();
            if !strings.is_empty() && strings.len() == values.len() {
                return strings;
            }
        }
    }
    Vec::new()
}

fn bare_lines(lines: &[&str]) -> Vec<String> {
    let non_empty: Vec<&str> = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty()).collect();
    if non_empty.len() < 2 || non_empty.iter().any(|l| l.chars().count() > MAX_BARE_LINE) {
        return Vec::new();
    }
    non_empty.into_iter().filter(|l| !l.ends_with(':')).map(str::to_string).collect()
}

fn finish(raw_items: Vec<String>, split_labels: bool) -> Vec<String> {
    let mut seen = HashSet::new();
    raw_items
        .into_iter()
        .map(|s| clean_item(&s, split_labels))
        .filter(|s| !s.is_empty())
        .filter(|s| seen.insert(name_key(s)))
        .collect()
}

const WRAPPERS: [(&str, &str); 10] = [
    ("**", "**"),
    ("__", "__"),
    ("*", "*"),
    ("_", "_"),
    ("`", "`"),
    ("\"", "\""),
    ("'", "'"),
    ("“", "”"),
    ("‘", "’"),
    ("«", "»"),
];

fn strip_wrappers(s: &str) -> &str {
    let mut s = s.trim();
    loop {
        let before = s;
        for (open, close) in WRAPPERS {
            if s.len() >= open.len() + close.len() && s.starts_with(open) && s.ends_with(close) {
                s = s[open.len()..s.len() - close.len()].trim();
            }
        }
        s = s.trim_end_matches(['.', ',', ';', ':', '!', '?']).trim_end();
        if s == before {
            return s;
        }
    }
}

fn strip_markup(s: &str) -> String {
    let mut s = s.to_string();
    loop {
        let next = s.replace("**", "").replace("__", "").replace('`', "");
        if next == s {
            return s;
        }
        s = next;
    }
}

/// Cleans one list item. Idempotent.
pub fn clean_item(item: &str, split_labels: bool) -> String {
    let mut s = item.to_string();
    loop {
        let mut next = strip_wrappers(&strip_markup(&s)).to_string();
        if split_labels {
            if let Some(c) = label_re().captures(&next) {
                next = strip_wrappers(&c[1]).to_string();
            }
        }
        if next == s {
            return s;
        }
        s = next;
    }
}

/// Renders items as a numbered list, the shape the parser reads first.
pub fn render_numbered(items: &[String]) -> String {
    items.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s)).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FL: GenerationStep = GenerationStep::FailureLocations;

    #[test]
    fn numbered_lines() {
        assert_eq!(parse_structured("1. Bearing\n2. Casing\n3. Shaft seal", FL).unwrap(), ["Bearing", "Casing", "Shaft seal"]);
        assert_eq!(parse_structured("Parts:\n1) Fan\n2) Coil\nThat is all.", FL).unwrap(), ["Fan", "Coil"]);
    }

    #[test]
    fn bullets_with_cleaning() {
        assert_eq!(parse_structured("Here are the parts:\n- **Fan**\n- Coil,", FL).unwrap(), ["Fan", "Coil"]);
        assert_eq!(parse_structured("• \"Impeller\"\n* `Volute`.", FL).unwrap(), ["Impeller", "Volute"]);
    }

    #[test]
    fn json_array_anywhere() {
        let raw = "Sure! ```json\n[\"Motor\", \"Gearbox\", \"motor\"]\n```";
        assert_eq!(parse_structured(raw, FL).unwrap(), ["Motor", "Gearbox"]);
        // arrays of non-strings are skipped in favor of a later string array
        assert_eq!(parse_structured("[1, 2] then [\"Belt\"]", FL).unwrap(), ["Belt"]);
    }

    #[test]
    fn bare_lines_need_two_short_lines() {
        assert_eq!(parse_structured("Components:\nFan\nCoil", FL).unwrap(), ["Fan", "Coil"]);
        assert_eq!(parse_structured("Fan", FL), Err(Unparseable));
        let prose = format!("{}\nCoil", "word ".repeat(30));
        assert_eq!(parse_structured(&prose, FL), Err(Unparseable));
        assert_eq!(parse_structured("", FL), Err(Unparseable));
    }

    #[test]
    fn labels_split_except_for_tasks() {
        assert_eq!(
            parse_structured("1. **Bearing**: supports the shaft\n2. Seal - keeps oil in", FL).unwrap(),
            ["Bearing", "Seal"]
        );
        assert_eq!(
            parse_structured("1. Inspect belt: check tension and wear.", GenerationStep::PreventiveTasks).unwrap(),
            ["Inspect belt: check tension and wear"]
        );
    }

    #[test]
    fn dedup_keeps_first_spelling() {
        assert_eq!(parse_structured("- Fan\n- FAN \n- fan.", FL).unwrap(), ["Fan"]);
    }

    #[test]
    fn numbered_beats_bullets() {
        assert_eq!(parse_structured("- ignored\n1. Kept", FL).unwrap(), ["Kept"]);
    }

    proptest! {
        #[test]
        fn reparsing_numbered_output_is_stable(raw in "[ -~\\n•“”]{0,200}") {
            for step in [FL, GenerationStep::PreventiveTasks] {
                if let Ok(items) = parse_structured(&raw, step) {
                    let again = parse_structured(&render_numbered(&items), step).unwrap();
                    prop_assert_eq!(again, items);
                }
            }
        }

        #[test]
        fn clean_item_is_idempotent(s in "[ -~]{0,40}") {
            let once = clean_item(&s, true);
            prop_assert_eq!(clean_item(&once, true), once.clone());
        }
    }
}
