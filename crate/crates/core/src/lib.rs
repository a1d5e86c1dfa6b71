//! Multi-persona brainstorming core: persona catalog, prompt rendering,
//! LLM gateway, event-sourced sessions, history compaction, highlights
//! and the study analytics.

pub mod analytics;
pub mod compactor;
pub mod config;
pub mod engine;
pub mod enrichment;
pub mod error;
pub mod gateway;
pub mod headless;
pub mod persona;
pub mod prompt;
pub mod session;
pub mod store;
pub mod wordlimit;

pub use compactor::{CompactedHistory, CompactionPolicy, Compactor, HistorySegment};
pub use config::EngineConfig;
pub use engine::{Action, ActionOutcome, Engine, EngineSettings};
pub use enrichment::HighlightSet;
pub use error::*;
pub use gateway::{ChatProvider, Gateway, ProviderProfile, ScriptEntry, ScriptedMock, SimulatedProvider};
pub use persona::{Catalog, PersonaConfig, Talkativeness, ToneInstruction};
pub use prompt::{render, Bindings, ExpectedShape, PromptKind, PromptRequest};
pub use session::{EventBody, Message, Phase, Session, SessionEvent, SessionState, Speaker, ThinkingMode, TurnChoice};
pub use store::EventStore;
pub use wordlimit::WordLimitPolicy;

/// Scalar used by the concrete analytics aliases below.
pub type Scalar = f64;

pub type InteractionMetrics = analytics::InteractionMetrics<Scalar>;
pub type TopicAnnotation = analytics::TopicAnnotation<Scalar>;
pub type TopicMetrics = analytics::TopicMetrics<Scalar>;
pub type RubricScore = analytics::RubricScore<Scalar>;
pub type PairedSample = analytics::PairedSample<Scalar>;
pub type WilcoxonResult = analytics::WilcoxonResult<Scalar>;
