//! The seam between the engine and a chat-completion provider.
//!
//! [`Gateway::complete`] sends a [`PromptRequest`], retries transient failures
//! with backoff, and parses the reply into the shape the request declares.
//! Providers only move text; parsing lives here so every provider gets the
//! same tolerance for fenced JSON, stray quotes and casing.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, NameError};
use crate::persona::PersonaConfig;
use crate::prompt::{ExpectedShape, PromptKind, PromptRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub endpoint: String,
    pub model_name: String,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    /// Sampling temperature for free-text turns.
    pub temperature: f64,
    /// First backoff delay; later delays double up to [`MAX_BACKOFF`].
    #[serde(with = "duration_secs")]
    pub backoff_base: Duration,
}

pub const MAX_BACKOFF: Duration = Duration::from_secs(8);

impl Default for ProviderProfile {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o".into(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            temperature: 0.7,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl ProviderProfile {
    /// Offline profile: no backoff sleeps.
    pub fn offline() -> Self {
        Self {
            endpoint: "mock://scripted".into(),
            model_name: "scripted-mock".into(),
            backoff_base: Duration::ZERO,
            ..Self::default()
        }
    }

    pub fn temperature_for(&self, shape: ExpectedShape) -> f64 {
        match shape {
            ExpectedShape::FreeText => self.temperature,
            _ => 0.0,
        }
    }

    /// Delay before retry `i` (0-based), for every allowed retry.
    pub fn backoff_schedule(&self) -> Vec<Duration> {
        (0..self.max_retries)
            .map(|i| {
                let factor = 1u32.checked_shl(i.min(16)).unwrap_or(u32::MAX);
                self.backoff_base.saturating_mul(factor).min(MAX_BACKOFF)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout.is_zero() {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::Config("temperature must be a non-negative number".into()));
        }
        Ok(())
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Per-call sampling parameters derived from the profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallParams {
    pub temperature: f64,
    pub timeout: Duration,
}

/// Anything that turns a prompt into raw reply text.
pub trait ChatProvider: Send + Sync {
    fn send(&self, req: &PromptRequest, params: &CallParams) -> Result<String, GatewayError>;

    /// Sends independent requests concurrently. Results line up with `reqs`.
    fn send_batch(
        &self,
        reqs: &[PromptRequest],
        params: &CallParams,
    ) -> Vec<Result<String, GatewayError>> {
        std::thread::scope(|scope| {
            let handles: Vec<_> = reqs
                .iter()
                .map(|req| scope.spawn(move || self.send(req, params)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or(Err(GatewayError::Transport(0))))
                .collect()
        })
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn send(&self, req: &PromptRequest, params: &CallParams) -> Result<String, GatewayError> {
        (**self).send(req, params)
    }

    fn send_batch(
        &self,
        reqs: &[PromptRequest],
        params: &CallParams,
    ) -> Vec<Result<String, GatewayError>> {
        (**self).send_batch(reqs, params)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Parsed {
    FreeText(String),
    PersonaName(String),
    PersonaRanking(Vec<String>),
    BooleanFlag(bool),
    PhraseList(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    pub raw_text: String,
    pub parsed: Parsed,
    pub attempts: u32,
}

impl CompletionResult {
    pub fn text(&self) -> &str {
        match &self.parsed {
            Parsed::FreeText(t) => t,
            _ => &self.raw_text,
        }
    }
}

/// Retrying, parsing front end over a [`ChatProvider`].
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    profile: ProviderProfile,
    sleep: fn(Duration),
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("profile", &self.profile).finish_non_exhaustive()
    }
}

fn no_sleep(_: Duration) {}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>, profile: ProviderProfile) -> Self {
        let sleep = if profile.backoff_base.is_zero() { no_sleep } else { std::thread::sleep };
        Self { provider, profile, sleep }
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn params(&self, shape: ExpectedShape) -> CallParams {
        CallParams {
            temperature: self.profile.temperature_for(shape),
            timeout: self.profile.timeout,
        }
    }

    pub fn complete(
        &self,
        req: &PromptRequest,
        roster: &[PersonaConfig],
    ) -> Result<CompletionResult, GatewayError> {
        self.complete_from(req, roster, None)
    }

    /// Retry loop. `first` is an already-obtained reply for attempt one.
    fn complete_from(
        &self,
        req: &PromptRequest,
        roster: &[PersonaConfig],
        mut first: Option<Result<String, GatewayError>>,
    ) -> Result<CompletionResult, GatewayError> {
        let params = self.params(req.expected_shape);
        let delays = self.profile.backoff_schedule();
        let mut last_err = GatewayError::Timeout;
        for attempt in 0..=self.profile.max_retries {
            if attempt > 0 {
                (self.sleep)(delays[attempt as usize - 1]);
            }
            let reply = match first.take() {
                Some(r) => r,
                None => self.provider.send(req, &params),
            };
            match reply {
                Ok(raw) => match parse_reply(req.expected_shape, &raw, roster) {
                    Ok(parsed) => {
                        return Ok(CompletionResult {
                            raw_text: raw,
                            parsed,
                            attempts: attempt + 1,
                        })
                    }
                    Err(e) => last_err = e,
                },
                Err(e) if e.is_retryable() => last_err = e,
                Err(e) => return Err(e),
            }
        }
        Err(last_err)
    }

    /// Fans the first attempt of every request out through the provider's
    /// batch path; retries run per request.
    pub fn complete_batch(
        &self,
        reqs: &[PromptRequest],
        roster: &[PersonaConfig],
    ) -> Vec<Result<CompletionResult, GatewayError>> {
        let Some(first) = reqs.first() else {
            return Vec::new();
        };
        let params = self.params(first.expected_shape);
        let replies = self.provider.send_batch(reqs, &params);
        reqs.iter()
            .zip(replies)
            .map(|(req, reply)| self.complete_from(req, roster, Some(reply)))
            .collect()
    }
}

/// Parses raw provider text into the variant `shape` calls for.
pub fn parse_reply(
    shape: ExpectedShape,
    raw: &str,
    roster: &[PersonaConfig],
) -> Result<Parsed, GatewayError> {
    let fail = || GatewayError::ParseFailure { raw_text: raw.to_string() };
    match shape {
        ExpectedShape::FreeText => {
            let text = raw.trim();
            if text.is_empty() {
                Err(fail())
            } else {
                Ok(Parsed::FreeText(text.to_string()))
            }
        }
        ExpectedShape::NameOnly => parse_name(raw, roster)
            .map(Parsed::PersonaName)
            .map_err(|_| fail()),
        ExpectedShape::JsonNameList => parse_ranking(raw, roster)
            .map(Parsed::PersonaRanking)
            .ok_or_else(fail),
        ExpectedShape::BooleanWord => parse_bool(raw).map(Parsed::BooleanFlag).ok_or_else(fail),
        ExpectedShape::JsonStringList => parse_string_list(raw)
            .map(Parsed::PhraseList)
            .ok_or_else(fail),
    }
}

/// Returns the body of the first fenced code block, or the input.
pub fn unwrap_code_fence(raw: &str) -> &str {
    let Some(open) = raw.find("```") else {
        return raw;
    };
    let after = &raw[open + 3..];
    // skip an info string such as `json`
    let body_start = match after.find('\n') {
        Some(nl) if after[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => nl + 1,
        _ => 0,
    };
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Resolves a model-written persona name against the roster.
///
/// Exact match on display name or id wins; otherwise a unique substring
/// match in either direction.
pub fn parse_name(raw: &str, roster: &[PersonaConfig]) -> Result<String, NameError> {
    let needle = normalize_name(unwrap_code_fence(raw));
    if needle.is_empty() {
        return Err(NameError::NoMatch(raw.to_string()));
    }
    if let Some(p) = roster
        .iter()
        .find(|p| normalize_name(&p.display_name) == needle || normalize_name(&p.id) == needle)
    {
        return Ok(p.id.clone());
    }
    let hits: Vec<&PersonaConfig> = roster
        .iter()
        .filter(|p| {
            let name = normalize_name(&p.display_name);
            !name.is_empty() && (name.contains(&needle) || needle.contains(&name))
        })
        .collect();
    match hits.as_slice() {
        [one] => Ok(one.id.clone()),
        [] => Err(NameError::NoMatch(raw.to_string())),
        many => Err(NameError::AmbiguousMatch {
            raw: raw.to_string(),
            candidates: many.iter().map(|p| p.id.clone()).collect(),
        }),
    }
}

/// Splits the first bracketed list into its string items. Accepts strict
/// JSON as well as single-quoted or bare items.
pub fn parse_string_list(raw: &str) -> Option<Vec<String>> {
    let body = unwrap_code_fence(raw);
    let open = body.find('[')?;
    let close = body.rfind(']')?;
    if close < open {
        return None;
    }
    let inner = &body[open..=close];
    if let Ok(items) = serde_json::from_str::<Vec<String>>(inner) {
        return Some(items);
    }
    lex_list_items(&inner[1..inner.len() - 1])
}

fn lex_list_items(inner: &str) -> Option<Vec<String>> {
    let mut items = Vec::new();
    let mut chars = inner.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let Some(&c) = chars.peek() else { break };
        let item = if c == '\'' || c == '"' {
            chars.next();
            let mut s = String::new();
            let mut closed = false;
            while let Some(ch) = chars.next() {
                if ch == '\\' {
                    if let Some(esc) = chars.next() {
                        s.push(esc);
                    }
                } else if ch == c {
                    closed = true;
                    break;
                } else {
                    s.push(ch);
                }
            }
            if !closed {
                return None;
            }
            s
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch == ',' {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            s.trim().to_string()
        };
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None | Some(',') => {}
            Some(_) => return None,
        }
        if !item.is_empty() {
            items.push(item);
        }
    }
    Some(items)
}

/// Ordered roster ids from a ranking reply. Unknown names are dropped;
/// `None` if nothing usable remains.
pub fn parse_ranking(raw: &str, roster: &[PersonaConfig]) -> Option<Vec<String>> {
    let mut ids: Vec<String> = Vec::new();
    for item in parse_string_list(raw)? {
        if let Ok(id) = parse_name(&item, roster) {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    (!ids.is_empty()).then_some(ids)
}

pub fn parse_bool(raw: &str) -> Option<bool> {
    let body = unwrap_code_fence(raw);
    let words: Vec<String> = body
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let has_true = words.iter().any(|w| w == "true");
    let has_false = words.iter().any(|w| w == "false");
    if has_true && has_false {
        return None;
    }
    match words.first().map(String::as_str) {
        Some("yes") => return Some(true),
        Some("no") => return Some(false),
        _ => {}
    }
    match (has_true, has_false) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

/// One canned reply in a mock script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub shape: ExpectedShape,
    #[serde(default)]
    pub text: String,
    /// Simulated transport failure instead of a reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ScriptedFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedFailure {
    Timeout,
    RateLimited,
    ServerError,
    BadRequest,
}

impl ScriptEntry {
    pub fn new(shape: ExpectedShape, text: impl Into<String>) -> Self {
        Self { shape, text: text.into(), error: None }
    }

    pub fn free(text: impl Into<String>) -> Self {
        Self::new(ExpectedShape::FreeText, text)
    }

    pub fn name(text: impl Into<String>) -> Self {
        Self::new(ExpectedShape::NameOnly, text)
    }

    pub fn ranking(text: impl Into<String>) -> Self {
        Self::new(ExpectedShape::JsonNameList, text)
    }

    pub fn boolean(text: impl Into<String>) -> Self {
        Self::new(ExpectedShape::BooleanWord, text)
    }

    pub fn phrases(text: impl Into<String>) -> Self {
        Self::new(ExpectedShape::JsonStringList, text)
    }

    pub fn failing(shape: ExpectedShape, failure: ScriptedFailure) -> Self {
        Self { shape, text: String::new(), error: Some(failure) }
    }
}

#[derive(Debug, Default)]
struct MockState {
    cursor: usize,
    log: Vec<PromptRequest>,
}

/// Replays a fixed script in order and records every request.
///
/// Batches are served in slice order under one lock, so a concurrent
/// fan-out still consumes the script deterministically.
#[derive(Debug)]
pub struct ScriptedMock {
    script: Vec<ScriptEntry>,
    seed: u64,
    state: Mutex<MockState>,
}

impl ScriptedMock {
    pub fn new(script: Vec<ScriptEntry>, seed: u64) -> Self {
        Self { script, seed, state: Mutex::new(MockState::default()) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn recorded(&self) -> Vec<PromptRequest> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap().log.len()
    }

    pub fn remaining(&self) -> usize {
        let st = self.state.lock().unwrap();
        self.script.len() - st.cursor
    }

    fn serve(&self, st: &mut MockState, req: &PromptRequest) -> Result<String, GatewayError> {
        st.log.push(req.clone());
        let index = st.cursor;
        let entry = self
            .script
            .get(index)
            .ok_or(GatewayError::ScriptExhausted(self.script.len()))?;
        if entry.shape != req.expected_shape {
            return Err(GatewayError::ScriptMismatch {
                index,
                expected: entry.shape.to_string(),
                requested: format!("{} ({})", req.expected_shape, req.kind.map_or("judge", PromptKind::name)),
            });
        }
        st.cursor += 1;
        match entry.error {
            None => Ok(entry.text.clone()),
            Some(ScriptedFailure::Timeout) => Err(GatewayError::Timeout),
            Some(ScriptedFailure::RateLimited) => Err(GatewayError::RateLimited),
            Some(ScriptedFailure::ServerError) => Err(GatewayError::Transport(503)),
            Some(ScriptedFailure::BadRequest) => Err(GatewayError::Transport(400)),
        }
    }
}

/// Builds a scripted provider; the script must not be empty.
pub fn scripted_mock(script: Vec<ScriptEntry>, seed: u64) -> Result<ScriptedMock, GatewayError> {
    if script.is_empty() {
        return Err(GatewayError::Config("mock script is empty".into()));
    }
    Ok(ScriptedMock::new(script, seed))
}

impl ChatProvider for ScriptedMock {
    fn send(&self, req: &PromptRequest, _params: &CallParams) -> Result<String, GatewayError> {
        let mut st = self.state.lock().unwrap();
        self.serve(&mut st, req)
    }

    fn send_batch(
        &self,
        reqs: &[PromptRequest],
        _params: &CallParams,
    ) -> Vec<Result<String, GatewayError>> {
        let mut st = self.state.lock().unwrap();
        reqs.iter().map(|r| self.serve(&mut st, r)).collect()
    }
}

/// Provider backed by a closure; handy for deterministic summarizers.
pub struct FnProvider<F>(pub F);

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&PromptRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn send(&self, req: &PromptRequest, _params: &CallParams) -> Result<String, GatewayError> {
        (self.0)(req)
    }
}

/// Offline stand-in that answers any request plausibly.
///
/// Replies depend only on the seed and the request text, never on call
/// order, so concurrent use stays reproducible.
#[derive(Debug, Clone)]
pub struct SimulatedProvider {
    seed: u64,
    names: Vec<String>,
}

const FILLER: [&str; 8] = [
    "What if we start from the moment people feel stuck",
    "I'd test a tiny version first and watch where it breaks",
    "Could we borrow a pattern from games here",
    "The risk is we build for power users only",
    "Maybe the simplest path is a shared live board",
    "Let's check what the data says before betting big",
    "I like that, but it has to stay lightweight",
    "We should ask who loses out if this works",
];

impl SimulatedProvider {
    pub fn new(seed: u64, display_names: Vec<String>) -> Self {
        Self { seed, names: display_names }
    }

    fn rng_for(&self, req: &PromptRequest) -> ChaCha8Rng {
        let mut h = DefaultHasher::new();
        req.text.hash(&mut h);
        ChaCha8Rng::seed_from_u64(self.seed ^ h.finish())
    }

    fn names_in(&self, text: &str) -> Vec<String> {
        self.names.iter().filter(|n| text.contains(n.as_str())).cloned().collect()
    }
}

impl ChatProvider for SimulatedProvider {
    fn send(&self, req: &PromptRequest, _params: &CallParams) -> Result<String, GatewayError> {
        let mut rng = self.rng_for(req);
        let reply = match req.expected_shape {
            ExpectedShape::FreeText => match req.kind {
                Some(PromptKind::FacilitatorMain) => {
                    "So far the team has mapped a few directions. Should we keep exploring or start narrowing down?".to_string()
                }
                _ => format!("{}.", FILLER[rng.gen_range(0..FILLER.len())]),
            },
            ExpectedShape::NameOnly => {
                let listed = match req.text.rfind("Available Experts:") {
                    Some(i) => self.names_in(&req.text[i..]),
                    None => self.names_in(&req.text),
                };
                listed.choose(&mut rng).cloned().unwrap_or_default()
            }
            ExpectedShape::JsonNameList => {
                let listed = match req.text.find("available to speak:") {
                    Some(i) => {
                        let tail = &req.text[i..];
                        let end = tail.find(". Rank").unwrap_or(tail.len());
                        self.names_in(&tail[..end])
                    }
                    None => self.names_in(&req.text),
                };
                let mut listed = listed;
                listed.shuffle(&mut rng);
                serde_json::to_string(&listed).expect("names serialize")
            }
            ExpectedShape::BooleanWord => {
                if rng.gen_bool(0.5) { "True" } else { "False" }.to_string()
            }
            ExpectedShape::JsonStringList => {
                let text = req
                    .text
                    .split("Text to analyze: ")
                    .nth(1)
                    .and_then(|t| t.split(". Instructions:").next())
                    .unwrap_or("");
                let words: Vec<&str> = text.split_whitespace().collect();
                let phrase = words.iter().take(2).copied().collect::<Vec<_>>().join(" ");
                serde_json::to_string(&[phrase]).expect("phrases serialize")
            }
        };
        Ok(reply)
    }
}
