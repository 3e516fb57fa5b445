//! Text-generation service contract and deterministic mock providers.
//!
//! Transport is pluggable: anything implementing [`TextService`] can back
//! ingestion (cleaning, table summaries) and generation. The mocks here are
//! what the tests and offline runs use.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_instruction: String,
    pub user_content: String,
    pub max_output_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceErrorKind {
    /// Worth retrying (connection reset, 5xx, overload).
    Transient,
    /// Retrying will not help (bad request, no scripted reply).
    Permanent,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("text service error ({kind:?}): {message}")]
pub struct ServiceError {
    pub kind: ServiceErrorKind,
    pub message: String,
}

impl ServiceError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self { kind: ServiceErrorKind::Transient, message: message.into() }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self { kind: ServiceErrorKind::Permanent, message: message.into() }
    }

    pub fn is_transient(&self) -> bool {
        self.kind == ServiceErrorKind::Transient
    }
}

pub trait TextService: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ServiceError>;
}

impl<T: TextService + ?Sized> TextService for std::sync::Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("reading fixture {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing fixture {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// One entry of a scripted fixture: the first rule whose `match` is a
/// substring of the request's user content supplies the reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub pattern: String,
    pub reply: String,
}

impl ScriptRule {
    pub fn new(pattern: impl Into<String>, reply: impl Into<String>) -> Self {
        Self { pattern: pattern.into(), reply: reply.into() }
    }
}

pub mod mock {
    use super::*;

    /// Replays an ordered list of `{match, reply}` rules.
    #[derive(Debug, Default)]
    pub struct ScriptedTextService {
        rules: Vec<ScriptRule>,
        requests: Mutex<Vec<CompletionRequest>>,
    }

    impl ScriptedTextService {
        pub fn new(rules: Vec<ScriptRule>) -> Self {
            Self { rules, requests: Mutex::new(Vec::new()) }
        }

        pub fn from_json_str(json: &str) -> Result<Self, serde_json::Error> {
            Ok(Self::new(serde_json::from_str(json)?))
        }

        pub fn from_file(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
            let path = path.as_ref();
            let text = fs::read_to_string(path)
                .map_err(|source| FixtureError::Io { path: path.display().to_string(), source })?;
            Self::from_json_str(&text)
                .map_err(|source| FixtureError::Json { path: path.display().to_string(), source })
        }

        /// Every request seen so far, in arrival order.
        pub fn requests(&self) -> Vec<CompletionRequest> {
            self.requests.lock().unwrap().clone()
        }
    }

    impl TextService for ScriptedTextService {
        fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
            self.requests.lock().unwrap().push(request.clone());
            self.rules
                .iter()
                .find(|r| request.user_content.contains(&r.pattern))
                .map(|r| CompletionResponse { text: r.reply.clone() })
                .ok_or_else(|| ServiceError::permanent("no scripted reply matches the request"))
        }
    }

    /// Always fails. Models a service that is down.
    #[derive(Debug)]
    pub struct UnavailableTextService {
        kind: ServiceErrorKind,
        calls: AtomicUsize,
    }

    impl UnavailableTextService {
        pub fn transient() -> Self {
            Self { kind: ServiceErrorKind::Transient, calls: AtomicUsize::new(0) }
        }

        pub fn permanent() -> Self {
            Self { kind: ServiceErrorKind::Permanent, calls: AtomicUsize::new(0) }
        }

        pub fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl Default for UnavailableTextService {
        fn default() -> Self {
            Self::transient()
        }
    }

    impl TextService for UnavailableTextService {
        fn complete(&self, _request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Err(ServiceError { kind: self.kind, message: "service unavailable".into() })
        }
    }

    /// Fails transiently a fixed number of times, then returns `reply`.
    #[derive(Debug)]
    pub struct FlakyTextService {
        failures: usize,
        reply: String,
        attempts: AtomicUsize,
    }

    impl FlakyTextService {
        pub fn new(failures: usize, reply: impl Into<String>) -> Self {
            Self { failures, reply: reply.into(), attempts: AtomicUsize::new(0) }
        }

        pub fn attempts(&self) -> usize {
            self.attempts.load(Ordering::SeqCst)
        }
    }

    impl TextService for FlakyTextService {
        fn complete(&self, _request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
            let n = self.attempts.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(ServiceError::transient(format!("scripted failure {}", n + 1)))
            } else {
                Ok(CompletionResponse { text: self.reply.clone() })
            }
        }
    }

    /// Sleeps before answering; for timeout tests.
    #[derive(Debug)]
    pub struct SlowTextService {
        pub delay: std::time::Duration,
        pub reply: String,
    }

    impl TextService for SlowTextService {
        fn complete(&self, _request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
            std::thread::sleep(self.delay);
            Ok(CompletionResponse { text: self.reply.clone() })
        }
    }

    /// Closure-backed service for one-off test behavior.
    pub struct FnTextService<F>(pub F);

    impl<F> TextService for FnTextService<F>
    where
        F: Fn(&CompletionRequest) -> Result<CompletionResponse, ServiceError> + Send + Sync,
    {
        fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
            (self.0)(request)
        }
    }

    /// Oracle reader: answers a generation prompt by listing, as a numbered
    /// list, every lexicon entity that appears in the prompt's fenced context
    /// sections. Prompts without context get `zero_shot_reply`.
    ///
    /// Matching is case-insensitive on word boundaries; entities are listed in
    /// order of first appearance in the context.
    #[derive(Debug, Clone)]
    pub struct ExtractiveTextService {
        lexicon: Vec<String>,
        zero_shot_reply: String,
    }

    impl ExtractiveTextService {
        pub fn new(lexicon: impl IntoIterator<Item = impl Into<String>>) -> Self {
            Self {
                lexicon: lexicon.into_iter().map(Into::into).collect(),
                zero_shot_reply: "No reference context was provided.".into(),
            }
        }

        pub fn with_zero_shot_reply(mut self, reply: impl Into<String>) -> Self {
            self.zero_shot_reply = reply.into();
            self
        }

        /// Lexicon entries found in `text`, ordered by first occurrence.
        pub fn entities_in(&self, text: &str) -> Vec<String> {
            let lower = text.to_lowercase();
            let mut hits: Vec<(usize, usize, &String)> = Vec::new();
            for (li, entity) in self.lexicon.iter().enumerate() {
                if let Some(pos) = find_word(&lower, &entity.to_lowercase()) {
                    hits.push((pos, li, entity));
                }
            }
            hits.sort();
            hits.into_iter().map(|(_, _, e)| e.clone()).collect()
        }
    }

    fn find_word(haystack: &str, needle: &str) -> Option<usize> {
        if needle.is_empty() {
            return None;
        }
        let is_word = |c: char| c.is_alphanumeric();
        let mut from = 0;
        while let Some(rel) = haystack[from..].find(needle) {
            let start = from + rel;
            let end = start + needle.len();
            let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !is_word(c));
            let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word(c));
            if before_ok && after_ok {
                return Some(start);
            }
            from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
        }
        None
    }

    impl TextService for ExtractiveTextService {
        fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
            let sections = crate::generation::context_sections(&request.user_content);
            if sections.is_empty() {
                return Ok(CompletionResponse { text: self.zero_shot_reply.clone() });
            }
            let joined: String = sections.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n");
            let found = self.entities_in(&joined);
            if found.is_empty() {
                return Ok(CompletionResponse {
                    text: "The provided context does not mention any matching components.".into(),
                });
            }
            let text = found
                .iter()
                .enumerate()
                .map(|(i, e)| format!("{}. {}", i + 1, e))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(CompletionResponse { text })
        }
    }

    /// Wraps a service and records every successful exchange as a scripted
    /// rule keyed by the full user content, so a run can be replayed later
    /// through [`ScriptedTextService`].
    pub struct RecordingTextService<S> {
        inner: S,
        recorded: Mutex<Vec<ScriptRule>>,
    }

    impl<S: TextService> RecordingTextService<S> {
        pub fn new(inner: S) -> Self {
            Self { inner, recorded: Mutex::new(Vec::new()) }
        }

        /// Recorded rules, de-duplicated by request and sorted so the fixture
        /// is stable regardless of arrival order. Longer patterns come first so
        /// a request never replays the reply of a shorter request it contains.
        pub fn rules(&self) -> Vec<ScriptRule> {
            let mut rules = self.recorded.lock().unwrap().clone();
            rules.sort_by(|a, b| b.pattern.len().cmp(&a.pattern.len()).then_with(|| a.pattern.cmp(&b.pattern)));
            rules.dedup_by(|a, b| a.pattern == b.pattern);
            rules
        }

        pub fn to_fixture_json(&self) -> String {
            serde_json::to_string_pretty(&self.rules()).expect("rules serialize") + "\n"
        }
    }

    impl<S: TextService> TextService for RecordingTextService<S> {
        fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
            let response = self.inner.complete(request)?;
            self.recorded
                .lock()
                .unwrap()
                .push(ScriptRule::new(request.user_content.clone(), response.text.clone()));
            Ok(response)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::mock::*;
    use super::*;

    fn req(content: &str) -> CompletionRequest {
        CompletionRequest {
            system_instruction: "sys".into(),
            user_content: content.into(),
            max_output_chars: 100,
        }
    }

    #[test]
    fn scripted_first_matching_rule_wins() {
        let svc = ScriptedTextService::from_json_str(
            r#"[{"match": "pump", "reply": "1. Impeller"}, {"match": "", "reply": "fallback"}]"#,
        )
        .unwrap();
        assert_eq!(svc.complete(&req("centrifugal pump")).unwrap().text, "1. Impeller");
        assert_eq!(svc.complete(&req("fan")).unwrap().text, "fallback");
        assert_eq!(svc.requests().len(), 2);
    }

    #[test]
    fn scripted_without_match_is_permanent_error() {
        let svc = ScriptedTextService::new(vec![ScriptRule::new("x", "y")]);
        let err = svc.complete(&req("abc")).unwrap_err();
        assert!(!err.is_transient());
    }

    #[test]
    fn flaky_recovers_after_failures() {
        let svc = FlakyTextService::new(2, "ok");
        assert!(svc.complete(&req("a")).is_err());
        assert!(svc.complete(&req("a")).is_err());
        assert_eq!(svc.complete(&req("a")).unwrap().text, "ok");
        assert_eq!(svc.attempts(), 3);
    }

    #[test]
    fn extractive_matches_whole_words_only() {
        let svc = ExtractiveTextService::new(["Fan", "Coil", "Drive belt"]);
        assert_eq!(
            svc.entities_in("The drive belt turns the fan. A fantastic coil."),
            vec!["Drive belt", "Fan", "Coil"]
        );
        assert!(svc.entities_in("fantastic").is_empty());
    }

    #[test]
    fn recorder_replays_through_scripted() {
        let rec = RecordingTextService::new(FnTextService(|r: &CompletionRequest| {
            Ok(CompletionResponse { text: r.user_content.to_uppercase() })
        }));
        rec.complete(&req("b")).unwrap();
        rec.complete(&req("a")).unwrap();
        rec.complete(&req("a")).unwrap();
        let replay = ScriptedTextService::from_json_str(&rec.to_fixture_json()).unwrap();
        assert_eq!(rec.rules().len(), 2);
        assert_eq!(replay.complete(&req("a")).unwrap().text, "A");
        assert_eq!(replay.complete(&req("b")).unwrap().text, "B");
    }
}
