//! Deterministic scripted provider for offline runs and tests.
//!
//! A script is an ordered list of (substring matcher, outcome sequence).
//! The first entry whose matcher occurs in the rendered prompt wins; its
//! outcomes are consumed one per call, the last repeating forever. A
//! catch-all entry (matcher `*` or empty) is mandatory so no prompt can
//! fall through.

use std::path::Path;
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{usage_estimate, ChatProvider, GenerationRequest, GenerationResponse, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockOutcome {
    Text(String),
    Fail,
}

#[derive(Debug, Clone)]
pub struct ScriptEntry {
    pub matcher: String,
    pub outcomes: Vec<MockOutcome>,
}

impl ScriptEntry {
    fn matches(&self, prompt: &str) -> bool {
        self.matcher.is_empty() || self.matcher == "*" || prompt.contains(&self.matcher)
    }

    fn is_catch_all(&self) -> bool {
        self.matcher.is_empty() || self.matcher == "*"
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MockScriptError {
    #[error("mock script must contain a catch-all entry (matcher \"*\")")]
    MissingCatchAll,
    #[error("mock script entry {0} has no outcomes")]
    EmptyOutcomes(usize),
    #[error("invalid mock script file: {0}")]
    Parse(String),
    #[error("cannot read mock script: {0}")]
    Io(#[from] std::io::Error),
}

/// On-disk entry shape: `{"match": "...", "response": "...", "fail_times": 2}`.
#[derive(Debug, Serialize, Deserialize)]
struct FileEntry {
    #[serde(rename = "match")]
    matcher: String,
    response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fail_times: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct MockScript {
    entries: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, MockScriptError> {
        if !entries.iter().any(|e| e.is_catch_all()) {
            return Err(MockScriptError::MissingCatchAll);
        }
        if let Some(i) = entries.iter().position(|e| e.outcomes.is_empty()) {
            return Err(MockScriptError::EmptyOutcomes(i));
        }
        Ok(MockScript { entries })
    }

    pub fn builder() -> MockScriptBuilder {
        MockScriptBuilder {
            entries: Vec::new(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, MockScriptError> {
        let file_entries: Vec<FileEntry> =
            serde_json::from_str(json).map_err(|e| MockScriptError::Parse(e.to_string()))?;
        let entries = file_entries
            .into_iter()
            .map(|fe| {
                let mut outcomes = vec![MockOutcome::Fail; fe.fail_times.unwrap_or(0) as usize];
                outcomes.push(MockOutcome::Text(fe.response));
                ScriptEntry {
                    matcher: fe.matcher,
                    outcomes,
                }
            })
            .collect();
        MockScript::new(entries)
    }

    pub fn from_file(path: &Path) -> Result<Self, MockScriptError> {
        MockScript::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn into_provider(self) -> MockProvider {
        MockProvider {
            consumed: Mutex::new(vec![0; self.entries.len()]),
            script: self,
            calls: Arc::new(AtomicU64::new(0)),
        }
    }
}

pub struct MockScriptBuilder {
    entries: Vec<ScriptEntry>,
}

impl MockScriptBuilder {
    /// Responds with `response` whenever the prompt contains `matcher`.
    pub fn on(mut self, matcher: impl Into<String>, response: impl Into<String>) -> Self {
        self.entries.push(ScriptEntry {
            matcher: matcher.into(),
            outcomes: vec![MockOutcome::Text(response.into())],
        });
        self
    }

    /// Fails transiently `times` times, then responds with `response`.
    pub fn fail_times(
        mut self,
        matcher: impl Into<String>,
        times: usize,
        response: impl Into<String>,
    ) -> Self {
        let mut outcomes = vec![MockOutcome::Fail; times];
        outcomes.push(MockOutcome::Text(response.into()));
        self.entries.push(ScriptEntry {
            matcher: matcher.into(),
            outcomes,
        });
        self
    }

    /// Responds with a sequence, one outcome per call, last repeating.
    pub fn sequence(mut self, matcher: impl Into<String>, responses: &[&str]) -> Self {
        self.entries.push(ScriptEntry {
            matcher: matcher.into(),
            outcomes: responses
                .iter()
                .map(|r| MockOutcome::Text(r.to_string()))
                .collect(),
        });
        self
    }

    pub fn catch_all(self, response: impl Into<String>) -> Self {
        self.on("*", response)
    }

    pub fn build(self) -> Result<MockScript, MockScriptError> {
        MockScript::new(self.entries)
    }
}

/// Scripted provider. Identical (script, request history) always yields the
/// same responses, so offline runs are byte-reproducible.
pub struct MockProvider {
    script: MockScript,
    consumed: Mutex<Vec<usize>>,
    calls: Arc<AtomicU64>,
}

impl MockProvider {
    /// Shared counter of completion attempts, for retry assertions.
    pub fn call_counter(&self) -> Arc<AtomicU64> {
        self.calls.clone()
    }
}

impl ChatProvider for MockProvider {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        self.calls
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let prompt = req.rendered();
        let idx = self
            .script
            .entries
            .iter()
            .position(|e| e.matches(&prompt))
            .expect("catch-all entry guarantees a match");
        let entry = &self.script.entries[idx];
        let outcome = {
            let mut consumed = self.consumed.lock().expect("mock state poisoned");
            let n = consumed[idx].min(entry.outcomes.len() - 1);
            consumed[idx] += 1;
            entry.outcomes[n].clone()
        };
        match outcome {
            MockOutcome::Text(text) => Ok(usage_estimate(req, &text)),
            MockOutcome::Fail => Err(ProviderError::Transient("scripted failure".into())),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    fn req(prompt: &str) -> GenerationRequest {
        GenerationRequest::new("m", vec![ChatMessage::user(prompt)], 0.0)
    }

    #[test]
    fn first_match_wins() {
        let p = MockScript::builder()
            .on("alpha", "first")
            .on("alpha beta", "second")
            .catch_all("fallback")
            .build()
            .unwrap()
            .into_provider();
        assert_eq!(p.complete(&req("alpha beta")).unwrap().text, "first");
        assert_eq!(p.complete(&req("nothing")).unwrap().text, "fallback");
    }

    #[test]
    fn catch_all_is_mandatory() {
        let err = MockScript::builder().on("a", "b").build();
        assert!(matches!(err, Err(MockScriptError::MissingCatchAll)));
    }

    #[test]
    fn sequences_consume_then_repeat() {
        let p = MockScript::builder()
            .sequence("q", &["one", "two"])
            .catch_all("x")
            .build()
            .unwrap()
            .into_provider();
        assert_eq!(p.complete(&req("q")).unwrap().text, "one");
        assert_eq!(p.complete(&req("q")).unwrap().text, "two");
        assert_eq!(p.complete(&req("q")).unwrap().text, "two");
    }

    #[test]
    fn identical_runs_identical_transcripts() {
        let script = MockScript::builder()
            .sequence("a", &["1", "2", "3"])
            .catch_all("z")
            .build()
            .unwrap();
        let prompts = ["a", "b", "a", "a", "b"];
        let run = |p: MockProvider| -> Vec<String> {
            prompts
                .iter()
                .map(|q| p.complete(&req(q)).unwrap().text)
                .collect()
        };
        assert_eq!(
            run(script.clone().into_provider()),
            run(script.into_provider())
        );
    }

    #[test]
    fn json_script_round_trip() {
        let json = r#"[
            {"match": "plan", "response": "{}"},
            {"match": "flaky", "fail_times": 1, "response": "ok now"},
            {"match": "*", "response": "ok"}
        ]"#;
        let p = MockScript::from_json(json).unwrap().into_provider();
        assert_eq!(p.complete(&req("the plan")).unwrap().text, "{}");
        assert!(p.complete(&req("flaky")).is_err());
        assert_eq!(p.complete(&req("flaky")).unwrap().text, "ok now");
        assert_eq!(p.complete(&req("other")).unwrap().text, "ok");
    }

    #[test]
    fn usage_counts_are_deterministic() {
        let p = MockScript::builder()
            .catch_all("abcdefgh")
            .build()
            .unwrap()
            .into_provider();
        let r = p.complete(&req("abcd")).unwrap();
        assert_eq!(r.prompt_tokens, 1);
        assert_eq!(r.completion_tokens, 2);
    }
}
