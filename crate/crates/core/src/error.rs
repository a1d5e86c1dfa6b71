use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("persona id `{0}` already registered")]
    DuplicateId(String),
    #[error("the facilitator persona cannot be added or replaced")]
    FacilitatorImmutable,
    #[error("catalog must hold exactly one facilitator, found {0}")]
    FacilitatorCount(usize),
    #[error("persona `{0}` is missing required fields")]
    IncompletePersona(String),
    #[error("catalog document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("missing placeholder binding `{0}`")]
    MissingPlaceholder(String),
    #[error("binding `{0}` is not a placeholder of this template")]
    UnknownPlaceholder(String),
    #[error("welcome message needs at least one colleague")]
    EmptyRoster,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("no roster persona matches `{0}`")]
    NoMatch(String),
    #[error("`{raw}` matches several personas: {candidates:?}")]
    AmbiguousMatch { raw: String, candidates: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("provider transport error (status {0})")]
    Transport(u16),
    #[error("provider timed out")]
    Timeout,
    #[error("provider rate limited the request")]
    RateLimited,
    #[error("could not parse provider reply: {raw_text:?}")]
    ParseFailure { raw_text: String },
    #[error("mock script exhausted after {0} calls")]
    ScriptExhausted(usize),
    #[error("mock script entry {index} expects a {expected} reply but the request wants {requested}")]
    ScriptMismatch {
        index: usize,
        expected: String,
        requested: String,
    },
    #[error("provider configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Transport-level failures worth another attempt.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::Timeout | GatewayError::RateLimited | GatewayError::Transport(500..=599)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("empty problem statement")]
    EmptyProblem,
    #[error("roster size {len} outside {min}..={max}")]
    RosterOutOfBounds { len: usize, min: usize, max: usize },
    #[error("unknown persona `{0}`")]
    UnknownPersona(String),
    #[error("persona `{0}` listed twice")]
    DuplicatePersona(String),
    #[error("the facilitator cannot be picked as a colleague")]
    FacilitatorInRoster,
    #[error("action `{action}` not allowed in phase {phase}")]
    InvalidPhase { action: String, phase: String },
    #[error("empty user message")]
    EmptyMessage,
    #[error("no message with seq {0}")]
    UnknownMessage(u64),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnrichmentError {
    #[error("message text is empty")]
    EmptyMessage,
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("annotation has no main topics")]
    ZeroTopics,
    #[error("every topic annotation run failed")]
    NoAnnotation,
    #[error("every rubric run was discarded")]
    NoScore,
    #[error("at least one run is required")]
    NoRuns,
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("paired vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("paired sample is empty")]
    EmptySample,
    #[error("survey answer {value} for item {item} is outside 1..=7")]
    AnswerOutOfScale { item: usize, value: u8 },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("no event log for session `{0}`")]
    NoSuchSession(String),
    #[error("corrupt event log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("event log io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {value}")]
    InvalidValue { key: String, value: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
}
