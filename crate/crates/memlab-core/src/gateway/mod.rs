//! Single choke point for all model calls.
//!
//! Everything that talks to a model goes through [`Gateway`]: it owns the
//! retry policy, the temperature defaults per call role, optional wire-body
//! recording, and bounded fan-out for batch calls. Behind it sits a
//! [`ChatProvider`] — either the OpenAI-compatible HTTP client or the
//! deterministic scripted mock.

pub mod mock;
pub mod openai;
pub mod wire;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::token::token_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: MessageRole::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: MessageRole::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: MessageRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_output_tokens: Option<u32>,
}

impl GenerationRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>, temperature: f32) -> Self {
        GenerationRequest {
            model_id: model_id.into(),
            messages,
            temperature: temperature.clamp(0.0, 2.0),
            max_output_tokens: None,
        }
    }

    /// All message contents joined, as seen by mock matchers.
    pub fn rendered(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "https://api.openai.com".into(),
            api_key_env: "MEMLAB_API_KEY".into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

/// Provider-level failure classification, driving the retry loop.
#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    /// Worth retrying: network hiccups, 429s, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    /// Not worth retrying: auth failures, bad endpoint.
    #[error("provider failure: {0}")]
    Fatal(String),
    /// Response arrived but could not be interpreted.
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited / retries exhausted after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("unparseable model output: {0}")]
    Unparseable(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// A yes/no answer from a detector call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Yes,
    No,
}

/// Role of a call, selecting its temperature and output cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallKind {
    /// Plan / assistant-turn synthesis: the diversity temperature.
    Synthesis,
    /// User-turn synthesis: diversity temperature plus the output cap.
    UserTurn,
    /// Answering, judging, detection, extraction, filtering: deterministic.
    Analysis,
}

/// Temperature defaults per call role. Held in config, never at call sites.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Temperatures {
    pub synthesis: f32,
    pub analysis: f32,
}

impl Default for Temperatures {
    fn default() -> Self {
        Temperatures {
            synthesis: 0.1,
            analysis: 0.0,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, ProviderError>;
    fn name(&self) -> &str;
}

/// Shared sink for serialized wire bodies, used for conformance checks.
pub type WireRecorder = Arc<Mutex<Vec<serde_json::Value>>>;

pub struct Gateway {
    provider: Box<dyn ChatProvider>,
    model_id: String,
    max_retries: u32,
    backoff_base: Duration,
    temperatures: Temperatures,
    user_turn_max_tokens: u32,
    parallelism: usize,
    recorder: Option<WireRecorder>,
    calls: AtomicU64,
}

impl Gateway {
    pub fn new(provider: Box<dyn ChatProvider>, model_id: impl Into<String>) -> Self {
        Gateway {
            provider,
            model_id: model_id.into(),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            temperatures: Temperatures::default(),
            user_turn_max_tokens: 6_000,
            parallelism: 1,
            recorder: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_retries(mut self, max_retries: u32, backoff_base: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff_base = backoff_base;
        self
    }

    pub fn with_temperatures(mut self, t: Temperatures) -> Self {
        self.temperatures = t;
        self
    }

    pub fn with_parallelism(mut self, limit: usize) -> Self {
        self.parallelism = limit.max(1);
        self
    }

    pub fn with_recorder(mut self, recorder: WireRecorder) -> Self {
        self.recorder = Some(recorder);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Total completed generate() calls (successful or not).
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Builds a request with the temperature and cap for `kind`.
    pub fn request(&self, kind: CallKind, messages: Vec<ChatMessage>) -> GenerationRequest {
        let temperature = match kind {
            CallKind::Synthesis | CallKind::UserTurn => self.temperatures.synthesis,
            CallKind::Analysis => self.temperatures.analysis,
        };
        let mut req = GenerationRequest::new(self.model_id.clone(), messages, temperature);
        if kind == CallKind::UserTurn {
            req.max_output_tokens = Some(self.user_turn_max_tokens);
        }
        req
    }

    /// One prompt in, one text out, with retry on transient failures.
    pub fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if let Some(rec) = &self.recorder {
            rec.lock()
                .expect("recorder poisoned")
                .push(wire::request_body(req));
        }
        let attempts = self.max_retries + 1;
        for attempt in 0..attempts {
            match self.provider.complete(req) {
                Ok(resp) => return Ok(resp),
                Err(ProviderError::Malformed(m)) => return Err(GatewayError::Malformed(m)),
                Err(ProviderError::Fatal(m)) => return Err(GatewayError::Transport(m)),
                Err(ProviderError::Transient(m)) => {
                    log::debug!(
                        "transient failure from {} (attempt {}/{}): {}",
                        self.provider.name(),
                        attempt + 1,
                        attempts,
                        m
                    );
                    if attempt + 1 < attempts {
                        let backoff = self.backoff_base * 2u32.pow(attempt);
                        if !backoff.is_zero() {
                            std::thread::sleep(backoff);
                        }
                    }
                }
            }
        }
        Err(GatewayError::RateLimited { attempts })
    }

    /// Convenience wrapper: single user prompt, returns the text.
    pub fn chat(&self, kind: CallKind, prompt: &str) -> Result<String, GatewayError> {
        let req = self.request(kind, vec![ChatMessage::user(prompt)]);
        self.generate(&req).map(|r| r.text)
    }

    /// Runs a batch of requests with at most `parallelism` in flight,
    /// returning results in input order.
    pub fn generate_batch(
        &self,
        reqs: &[GenerationRequest],
    ) -> Vec<Result<GenerationResponse, GatewayError>> {
        if self.parallelism <= 1 || reqs.len() <= 1 {
            return reqs.iter().map(|r| self.generate(r)).collect();
        }
        let next = AtomicU64::new(0);
        let slots: Vec<Mutex<Option<Result<GenerationResponse, GatewayError>>>> =
            reqs.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..self.parallelism.min(reqs.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed) as usize;
                    if i >= reqs.len() {
                        break;
                    }
                    *slots[i].lock().expect("batch slot poisoned") = Some(self.generate(&reqs[i]));
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .expect("batch slot poisoned")
                    .expect("slot filled")
            })
            .collect()
    }

    /// Yes/no detector call.
    pub fn generate_decision(&self, req: &GenerationRequest) -> Result<Decision, GatewayError> {
        let resp = self.generate(req)?;
        parse_decision(&resp.text)
            .ok_or_else(|| GatewayError::Unparseable(first_line(&resp.text).to_string()))
    }

    /// Judge verdict call: 0, 0.5, or 1.
    pub fn generate_verdict(&self, req: &GenerationRequest) -> Result<f64, GatewayError> {
        let resp = self.generate(req)?;
        parse_verdict(&resp.text)
            .ok_or_else(|| GatewayError::Unparseable(first_line(&resp.text).to_string()))
    }
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or("")
}

/// Parses a yes/no answer: leading token first, then any standalone
/// yes/no word in the first line. Case-insensitive.
pub fn parse_decision(text: &str) -> Option<Decision> {
    let line = first_line(text).trim();
    for word in line
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if word.eq_ignore_ascii_case("yes") {
            return Some(Decision::Yes);
        }
        if word.eq_ignore_ascii_case("no") {
            return Some(Decision::No);
        }
    }
    None
}

/// Parses the first standalone 0, 0.5, or 1 token anywhere in the text.
pub fn parse_verdict(text: &str) -> Option<f64> {
    for token in text
        .split(|c: char| !c.is_ascii_digit() && c != '.')
        .filter(|t| !t.is_empty())
    {
        match token {
            "0" | "0.0" => return Some(0.0),
            "0.5" | ".5" => return Some(0.5),
            "1" | "1.0" => return Some(1.0),
            _ => {}
        }
    }
    None
}

/// Deterministic token accounting for offline providers.
pub(crate) fn usage_estimate(req: &GenerationRequest, text: &str) -> GenerationResponse {
    GenerationResponse {
        text: text.to_string(),
        prompt_tokens: token_count(&req.rendered()) as u64,
        completion_tokens: token_count(text) as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::mock::MockScript;
    use super::*;

    fn mock_gateway(script: MockScript) -> Gateway {
        Gateway::new(Box::new(script.into_provider()), "mock-model").with_retries(3, Duration::ZERO)
    }

    #[test]
    fn scripted_catch_all_answers_any_request() {
        let gw = mock_gateway(MockScript::builder().catch_all("ok").build().unwrap());
        assert_eq!(
            gw.chat(CallKind::Analysis, "anything at all").unwrap(),
            "ok"
        );
    }

    #[test]
    fn retries_then_succeeds() {
        let script = MockScript::builder()
            .fail_times("flaky", 2, "recovered")
            .catch_all("ok")
            .build()
            .unwrap();
        let provider = script.into_provider();
        let calls = provider.call_counter();
        let gw = Gateway::new(Box::new(provider), "m").with_retries(3, Duration::ZERO);
        assert_eq!(
            gw.chat(CallKind::Analysis, "flaky prompt").unwrap(),
            "recovered"
        );
        assert_eq!(calls.load(Ordering::Relaxed), 3);
    }

    #[test]
    fn exhausted_retries_rate_limited() {
        let script = MockScript::builder()
            .fail_times("dead", 100, "never")
            .catch_all("ok")
            .build()
            .unwrap();
        let provider = script.into_provider();
        let calls = provider.call_counter();
        let gw = Gateway::new(Box::new(provider), "m").with_retries(2, Duration::ZERO);
        match gw.chat(CallKind::Analysis, "dead end") {
            Err(GatewayError::RateLimited { attempts }) => assert_eq!(attempts, 3),
            other => panic!("expected RateLimited, got {other:?}"),
        }
        assert_eq!(calls.load(Ordering::Relaxed), 3);
    }

    #[test]
    fn decision_parsing() {
        assert_eq!(parse_decision("Yes"), Some(Decision::Yes));
        assert_eq!(parse_decision(" no, because…"), Some(Decision::No));
        assert_eq!(parse_decision("NO."), Some(Decision::No));
        assert_eq!(parse_decision("I think yes"), Some(Decision::Yes));
        assert_eq!(parse_decision("maybe"), None);
        assert_eq!(parse_decision(""), None);
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("1"), Some(1.0));
        assert_eq!(parse_verdict("Score: 0.5 — partially satisfied"), Some(0.5));
        assert_eq!(parse_verdict("0\nbecause nothing matches"), Some(0.0));
        assert_eq!(parse_verdict("verdict 1.0 overall"), Some(1.0));
        assert_eq!(parse_verdict("pass"), None);
        // 10 and 4.1 are not standalone verdicts.
        assert_eq!(parse_verdict("10 out of 10"), None);
        assert_eq!(parse_verdict("v4.1 says 0.5"), Some(0.5));
    }

    #[test]
    fn temperature_policy_per_call_kind() {
        let gw = mock_gateway(MockScript::builder().catch_all("ok").build().unwrap());
        let synth = gw.request(CallKind::Synthesis, vec![ChatMessage::user("p")]);
        let user = gw.request(CallKind::UserTurn, vec![ChatMessage::user("p")]);
        let analysis = gw.request(CallKind::Analysis, vec![ChatMessage::user("p")]);
        assert!((synth.temperature - 0.1).abs() < 1e-6);
        assert_eq!(synth.max_output_tokens, None);
        assert!((user.temperature - 0.1).abs() < 1e-6);
        assert_eq!(user.max_output_tokens, Some(6_000));
        assert_eq!(analysis.temperature, 0.0);
        assert_eq!(analysis.max_output_tokens, None);
    }

    #[test]
    fn generate_does_not_mutate_request() {
        let gw = mock_gateway(MockScript::builder().catch_all("ok").build().unwrap());
        let req = gw.request(CallKind::Analysis, vec![ChatMessage::user("p")]);
        let before = req.clone();
        let _ = gw.generate(&req).unwrap();
        assert_eq!(req, before);
    }

    #[test]
    fn batch_results_in_input_order() {
        let script = MockScript::builder()
            .on("alpha", "A")
            .on("beta", "B")
            .on("gamma", "C")
            .catch_all("?")
            .build()
            .unwrap();
        let gw = Gateway::new(Box::new(script.into_provider()), "m")
            .with_retries(0, Duration::ZERO)
            .with_parallelism(3);
        let reqs: Vec<GenerationRequest> = ["gamma", "alpha", "beta"]
            .iter()
            .map(|p| gw.request(CallKind::Analysis, vec![ChatMessage::user(*p)]))
            .collect();
        let out: Vec<String> = gw
            .generate_batch(&reqs)
            .into_iter()
            .map(|r| r.unwrap().text)
            .collect();
        assert_eq!(out, vec!["C", "A", "B"]);
    }

    #[test]
    fn recorder_captures_wire_bodies() {
        let recorder: WireRecorder = Arc::default();
        let gw = mock_gateway(MockScript::builder().catch_all("ok").build().unwrap())
            .with_recorder(recorder.clone());
        gw.chat(CallKind::Analysis, "hello").unwrap();
        let recorded = recorder.lock().unwrap();
        assert_eq!(recorded.len(), 1);
        assert_eq!(recorded[0]["model"], "mock-model");
        assert_eq!(recorded[0]["messages"][0]["role"], "user");
        assert_eq!(recorded[0]["messages"][0]["content"], "hello");
    }
}
