//! Prompt templates and context fencing.
//!
//! Templates are TOML assets (one per step) with `version`, `system` and
//! `user` keys. The user template may reference these placeholders:
//! `{{asset_name}}`, `{{asset_description}}`, `{{main_parts}}`,
//! `{{parent_path}}`, `{{parent_name}}`, `{{context}}`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::GenerationStep;

pub const PLACEHOLDERS: [&str; 6] =
    ["asset_name", "asset_description", "main_parts", "parent_path", "parent_name", "context"];

pub(crate) const NO_CONTEXT: &str = "No reference documents are provided. Rely on general engineering knowledge.";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template for {step}: {message}")]
    Invalid { step: GenerationStep, message: String },
    #[error("reading template {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PromptTemplate {
    pub version: u32,
    pub system: String,
    pub user: String,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([a-z_]+)\s*\}\}").unwrap())
}

impl PromptTemplate {
    fn parse(step: GenerationStep, toml_text: &str) -> Result<Self, TemplateError> {
        let invalid = |message: String| TemplateError::Invalid { step, message };
        let mut t: PromptTemplate = toml::from_str(toml_text).map_err(|e| invalid(e.to_string()))?;
        t.system = t.system.trim().to_string();
        t.user = t.user.trim().to_string();
        for cap in placeholder_re().captures_iter(&t.user) {
            if !PLACEHOLDERS.contains(&&cap[1]) {
                return Err(invalid(format!("unknown placeholder `{}`", &cap[1])));
            }
        }
        if !t.user.contains("{{context}}") {
            return Err(invalid("user template must include {{context}}".into()));
        }
        Ok(t)
    }

    /// Substitutes placeholders; missing values render as empty text.
    pub fn render_user(&self, values: &HashMap<&str, String>) -> String {
        placeholder_re()
            .replace_all(&self.user, |cap: &regex::Captures<'_>| values.get(&cap[1]).cloned().unwrap_or_default())
            .into_owned()
    }
}

/// One template per generation step.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    by_step: HashMap<GenerationStep, PromptTemplate>,
}

impl PromptTemplates {
    /// The templates shipped in `templates/`.
    pub fn builtin() -> Self {
        let sources = [
            (GenerationStep::Boundary, include_str!("../../templates/boundary.toml")),
            (GenerationStep::FailureLocations, include_str!("../../templates/failure_locations.toml")),
            (GenerationStep::DegradationMechanisms, include_str!("../../templates/degradation_mechanisms.toml")),
            (GenerationStep::DegradationInfluences, include_str!("../../templates/degradation_influences.toml")),
            (GenerationStep::PreventiveTasks, include_str!("../../templates/preventive_tasks.toml")),
        ];
        let by_step = sources
            .into_iter()
            .map(|(step, text)| (step, PromptTemplate::parse(step, text).expect("built-in template is valid")))
            .collect();
        Self { by_step }
    }

    /// Loads `<step>.toml` for every step from `dir`, e.g. to tune wording
    /// without rebuilding.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let mut by_step = HashMap::new();
        for step in GenerationStep::ALL {
            let path = dir.as_ref().join(format!("{}.toml", step.as_str()));
            let text = std::fs::read_to_string(&path)
                .map_err(|source| TemplateError::Io { path: path.display().to_string(), source })?;
            by_step.insert(step, PromptTemplate::parse(step, &text)?);
        }
        Ok(Self { by_step })
    }

    pub fn get(&self, step: GenerationStep) -> &PromptTemplate {
        &self.by_step[&step]
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

/// How much document context goes into a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextMode {
    ZeroShot,
    TopK(usize),
    LongContext,
}

impl ContextMode {
    pub const DEFAULT_K: usize = 5;

    pub fn table_label(self) -> (&'static str, String) {
        match self {
            ContextMode::ZeroShot => ("Zero-shot", "--".to_string()),
            ContextMode::TopK(k) => ("RAG system", format!("{k} chunks")),
            ContextMode::LongContext => ("RAG system", "Long".to_string()),
        }
    }
}

impl Default for ContextMode {
    fn default() -> Self {
        ContextMode::TopK(Self::DEFAULT_K)
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextMode::ZeroShot => f.write_str("zero-shot"),
            ContextMode::TopK(k) => write!(f, "chunks:{k}"),
            ContextMode::LongContext => f.write_str("long"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown context mode `{0}` (expected zero-shot, chunks:<k>, or long)")]
pub struct UnknownContextMode(pub String);

impl FromStr for ContextMode {
    type Err = UnknownContextMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "zero-shot" | "zeroshot" => return Ok(ContextMode::ZeroShot),
            "long" | "long-context" => return Ok(ContextMode::LongContext),
            _ => {}
        }
        norm.strip_prefix("chunks:")
            .or_else(|| norm.strip_prefix("top-k:"))
            .or_else(|| norm.strip_prefix("topk:"))
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .map(ContextMode::TopK)
            .ok_or_else(|| UnknownContextMode(s.to_string()))
    }
}

impl Serialize for ContextMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContextMode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A piece of retrieved or loaded context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextExcerpt {
    pub entry_id: String,
    /// `chunk`, `table`, or `document`.
    pub kind: String,
    pub text: String,
}

pub fn fence(excerpt: &ContextExcerpt) -> String {
    format!("<<<context id=\"{}\" kind=\"{}\">>>\n{}\n<<<end>>>", excerpt.entry_id, excerpt.kind, excerpt.text)
}

/// Recovers fenced context sections from rendered user content.
pub fn context_sections(user_content: &str) -> Vec<ContextExcerpt> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"(?s)<<<context id="([^"]*)" kind="([a-z]+)">>>\n(.*?)\n<<<end>>>"#).unwrap()
    });
    re.captures_iter(user_content)
        .map(|c| ContextExcerpt { entry_id: c[1].to_string(), kind: c[2].to_string(), text: c[3].to_string() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_load() {
        let t = PromptTemplates::builtin();
        for step in GenerationStep::ALL {
            let tpl = t.get(step);
            assert_eq!(tpl.version, 1);
            assert!(tpl.user.contains("numbered list"), "{step} lacks a structure hint");
        }
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let err = PromptTemplate::parse(
            GenerationStep::Boundary,
            "version = 1\nsystem = \"s\"\nuser = \"{{asset}} {{context}}\"",
        );
        assert!(matches!(err, Err(TemplateError::Invalid { .. })));
    }

    #[test]
    fn templates_load_from_dir() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("templates");
        let t = PromptTemplates::from_dir(dir).unwrap();
        assert_eq!(t.get(GenerationStep::PreventiveTasks), PromptTemplates::builtin().get(GenerationStep::PreventiveTasks));
    }

    #[test]
    fn context_mode_strings() {
        for (s, m) in [
            ("zero-shot", ContextMode::ZeroShot),
            ("chunks:3", ContextMode::TopK(3)),
            ("long", ContextMode::LongContext),
        ] {
            assert_eq!(s.parse::<ContextMode>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        assert_eq!("top_k:5".parse::<ContextMode>().unwrap(), ContextMode::TopK(5));
        assert!("chunks:0".parse::<ContextMode>().is_err());
        assert!("chunks".parse::<ContextMode>().is_err());
        assert_eq!(serde_json::to_string(&ContextMode::TopK(3)).unwrap(), "\"chunks:3\"");
    }

    #[test]
    fn fences_round_trip() {
        let ex = vec![
            ContextExcerpt { entry_id: "d#c0001".into(), kind: "chunk".into(), text: "line one\nline two".into() },
            ContextExcerpt { entry_id: "d#t00".into(), kind: "table".into(), text: "| a |\n|---|".into() },
        ];
        let rendered = ex.iter().map(fence).collect::<Vec<_>>().join("\n\n");
        assert_eq!(context_sections(&rendered), ex);
    }
}
