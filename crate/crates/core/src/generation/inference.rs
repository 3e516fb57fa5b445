//! Calls the text service with per-attempt timeouts and exponential backoff.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{GenerationError, PromptBundle};
use crate::service::{CompletionRequest, TextService};

pub const MAX_OUTPUT_CHARS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferencePolicy {
    /// Per-attempt limit. The whole call never runs longer than
    /// `timeout * (max_retries + 1)`.
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff; doubles after each failed attempt.
    pub initial_backoff: Duration,
}

impl Default for InferencePolicy {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(60), max_retries: 2, initial_backoff: Duration::from_millis(500) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceOutcome {
    pub text: String,
    pub attempts: u32,
}

enum Failure {
    Transient(String),
    TimedOut,
}

pub fn infer(
    bundle: &PromptBundle,
    text_service: Arc<dyn TextService>,
    policy: &InferencePolicy,
) -> Result<InferenceOutcome, GenerationError> {
    let request = CompletionRequest {
        system_instruction: bundle.system_instruction.clone(),
        user_content: bundle.user_content.clone(),
        max_output_chars: MAX_OUTPUT_CHARS,
    };
    complete_with_retries(&request, text_service, policy)
}

pub(crate) fn complete_with_retries(
    request: &CompletionRequest,
    text_service: Arc<dyn TextService>,
    policy: &InferencePolicy,
) -> Result<InferenceOutcome, GenerationError> {
    let deadline = Instant::now() + policy.timeout * (policy.max_retries + 1);
    let mut attempts = 0;
    let mut last = Failure::TimedOut;

    for attempt in 0..=policy.max_retries {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            break;
        }
        attempts += 1;

        let (tx, rx) = mpsc::channel();
        let svc = Arc::clone(&text_service);
        let req = request.clone();
        thread::spawn(move || {
            let _ = tx.send(svc.complete(&req));
        });

        match rx.recv_timeout(policy.timeout.min(remaining)) {
            Ok(Ok(response)) => return Ok(InferenceOutcome { text: response.text, attempts }),
            Ok(Err(e)) if e.is_transient() => last = Failure::Transient(e.message),
            Ok(Err(e)) => return Err(GenerationError::ServiceUnavailable { attempts, message: e.message }),
            Err(RecvTimeoutError::Timeout) => last = Failure::TimedOut,
            Err(RecvTimeoutError::Disconnected) => last = Failure::Transient("service call panicked".into()),
        }

        if attempt < policy.max_retries {
            let backoff = policy.initial_backoff.saturating_mul(1 << attempt.min(16));
            thread::sleep(backoff.min(deadline.saturating_duration_since(Instant::now())));
        }
    }

    Err(match last {
        Failure::Transient(message) => GenerationError::ServiceUnavailable { attempts, message },
        Failure::TimedOut => GenerationError::Timeout { attempts },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::prompt::ContextMode;
    use crate::model::GenerationStep;
    use crate::service::mock::{FlakyTextService, ScriptedTextService, SlowTextService, UnavailableTextService};
    use crate::service::ScriptRule;

    fn bundle() -> PromptBundle {
        PromptBundle {
            step: GenerationStep::FailureLocations,
            system_instruction: "sys".into(),
            user_content: "list parts".into(),
            context_refs: vec![],
            context_mode: ContextMode::ZeroShot,
        }
    }

    fn fast(max_retries: u32) -> InferencePolicy {
        InferencePolicy { timeout: Duration::from_secs(5), max_retries, initial_backoff: Duration::from_millis(1) }
    }

    #[test]
    fn passes_reply_through() {
        let svc = Arc::new(ScriptedTextService::new(vec![ScriptRule::new("", "1. Fan\n2. Coil")]));
        let out = infer(&bundle(), svc, &fast(0)).unwrap();
        assert_eq!(out.text, "1. Fan\n2. Coil");
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn retries_until_success() {
        let svc = Arc::new(FlakyTextService::new(2, "ok"));
        let out = infer(&bundle(), svc.clone(), &fast(2)).unwrap();
        assert_eq!(out.attempts, 3);
        assert_eq!(svc.attempts(), 3);
    }

    #[test]
    fn gives_up_after_retries() {
        let svc = Arc::new(UnavailableTextService::transient());
        let err = infer(&bundle(), svc.clone(), &fast(1)).unwrap_err();
        assert!(matches!(err, GenerationError::ServiceUnavailable { attempts: 2, .. }));
        assert_eq!(svc.calls(), 2);
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let svc = Arc::new(UnavailableTextService::permanent());
        let err = infer(&bundle(), svc.clone(), &fast(3)).unwrap_err();
        assert!(matches!(err, GenerationError::ServiceUnavailable { attempts: 1, .. }));
        assert_eq!(svc.calls(), 1);
    }

    #[test]
    fn timeouts_are_bounded() {
        let svc = Arc::new(SlowTextService { delay: Duration::from_millis(500), reply: "late".into() });
        let policy =
            InferencePolicy { timeout: Duration::from_millis(40), max_retries: 1, initial_backoff: Duration::from_millis(5) };
        let started = Instant::now();
        let err = infer(&bundle(), svc, &policy).unwrap_err();
        assert!(matches!(err, GenerationError::Timeout { attempts: 2 }));
        // budget is 2 x 40ms; the slow reply would take 500ms
        assert!(started.elapsed() < Duration::from_millis(250), "took {:?}", started.elapsed());
    }
}
