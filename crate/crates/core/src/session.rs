//! Session state, transcript messages and the event log that drives them.
//!
//! State changes only by applying [`EventBody`] values, so replaying a
//! persisted log reproduces the live state exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::compactor::CachedSummary;
use crate::error::LogError;

pub const EVENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThinkingMode {
    #[default]
    Explore,
    Focus,
}

impl fmt::Display for ThinkingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThinkingMode::Explore => "explore",
            ThinkingMode::Focus => "focus",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Speaker {
    User,
    Persona(String),
    Facilitator,
}

impl Speaker {
    pub fn persona_id(&self) -> Option<&str> {
        match self {
            Speaker::Persona(id) => Some(id),
            _ => None,
        }
    }

    /// User and facilitator turns are anchors that compaction keeps verbatim.
    pub fn is_anchor(&self) -> bool {
        !matches!(self, Speaker::Persona(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub speaker: Speaker,
    pub text: String,
    pub mode: ThinkingMode,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub highlights: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Created,
    Running,
    Closed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Created => "created",
            Phase::Running => "running",
            Phase::Closed => "closed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnChoice {
    pub chosen: String,
    pub ranking: Vec<String>,
    pub randomized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub problem: String,
    pub roster: Vec<String>,
    pub mode: ThinkingMode,
    pub transcript: Vec<Message>,
    pub last_speaker: Option<String>,
    pub ai_turns_since_facilitator: u32,
    pub rng_seed: u64,
    /// Position in the ChaCha stream seeded by `rng_seed`.
    pub rng_word_pos: u64,
    pub phase: Phase,
    pub summary_cache: BTreeMap<String, CachedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SessionCreated {
        session_id: String,
        problem: String,
        roster: Vec<String>,
        seed: u64,
    },
    MessageAppended {
        message: Message,
    },
    ModeChanged {
        mode: ThinkingMode,
    },
    PhaseChanged {
        phase: Phase,
    },
    HighlightsAttached {
        seq: u64,
        phrases: Vec<String>,
    },
    CompactionPerformed {
        summaries: Vec<CachedSummary>,
    },
    TurnChoice {
        choice: TurnChoice,
        rng_word_pos: u64,
    },
    ErrorLogged {
        message: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionCreated { .. } => "session_created",
            EventBody::MessageAppended { .. } => "message_appended",
            EventBody::ModeChanged { .. } => "mode_changed",
            EventBody::PhaseChanged { .. } => "phase_changed",
            EventBody::HighlightsAttached { .. } => "highlights_attached",
            EventBody::CompactionPerformed { .. } => "compaction_performed",
            EventBody::TurnChoice { .. } => "turn_choice",
            EventBody::ErrorLogged { .. } => "error_logged",
        }
    }
}

/// One line of the append-only session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub schema: u32,
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionState {
    /// Applies one event. Returns a reason string when the event does not
    /// fit the current state.
    pub fn apply(&mut self, body: &EventBody) -> Result<(), String> {
        match body {
            EventBody::SessionCreated { session_id, problem, roster, seed } => {
                if !self.id.is_empty() {
                    return Err("session created twice".into());
                }
                *self = SessionState {
                    id: session_id.clone(),
                    problem: problem.clone(),
                    roster: roster.clone(),
                    rng_seed: *seed,
                    ..SessionState::default()
                };
            }
            _ if self.id.is_empty() => return Err("event before session_created".into()),
            EventBody::MessageAppended { message } => {
                let expected = self.transcript.len() as u64 + 1;
                if message.seq != expected {
                    return Err(format!("message seq {} but expected {expected}", message.seq));
                }
                match &message.speaker {
                    Speaker::Persona(id) => {
                        if !self.roster.contains(id) {
                            return Err(format!("persona `{id}` not in roster"));
                        }
                        self.last_speaker = Some(id.clone());
                        self.ai_turns_since_facilitator += 1;
                    }
                    Speaker::Facilitator => self.ai_turns_since_facilitator = 0,
                    Speaker::User => {}
                }
                self.transcript.push(message.clone());
            }
            EventBody::ModeChanged { mode } => self.mode = *mode,
            EventBody::PhaseChanged { phase } => self.phase = *phase,
            EventBody::HighlightsAttached { seq, phrases } => {
                let msg = self
                    .transcript
                    .iter_mut()
                    .find(|m| m.seq == *seq)
                    .ok_or_else(|| format!("highlights for unknown message {seq}"))?;
                msg.highlights = phrases.clone();
            }
            EventBody::CompactionPerformed { summaries } => {
                for s in summaries {
                    self.summary_cache.insert(s.key.clone(), s.clone());
                }
            }
            EventBody::TurnChoice { rng_word_pos, .. } => self.rng_word_pos = *rng_word_pos,
            EventBody::ErrorLogged { .. } => {}
        }
        Ok(())
    }

    /// Rebuilds state from a complete event sequence.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Result<Self, LogError> {
        let mut state = SessionState::default();
        let mut expected = 1u64;
        for ev in events {
            if ev.seq != expected {
                return Err(LogError::CorruptLog {
                    seq: expected,
                    reason: format!("found seq {}", ev.seq),
                });
            }
            state
                .apply(&ev.body)
                .map_err(|reason| LogError::CorruptLog { seq: ev.seq, reason })?;
            expected += 1;
        }
        if expected == 1 {
            return Err(LogError::NoSuchSession(String::new()));
        }
        Ok(state)
    }

    pub fn message(&self, seq: u64) -> Option<&Message> {
        self.transcript.iter().find(|m| m.seq == seq)
    }
}

/// Live state plus the events that produced it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Session {
    pub state: SessionState,
    pub events: Vec<SessionEvent>,
}

impl Session {
    pub fn from_events(events: Vec<SessionEvent>) -> Result<Self, LogError> {
        let state = SessionState::replay(&events)?;
        Ok(Self { state, events })
    }

    pub fn record(&mut self, body: EventBody, timestamp: DateTime<Utc>) -> &SessionEvent {
        self.state
            .apply(&body)
            .unwrap_or_else(|e| panic!("engine produced an inconsistent event: {e}"));
        let seq = self.events.len() as u64 + 1;
        self.events.push(SessionEvent {
            schema: EVENT_SCHEMA_VERSION,
            seq,
            timestamp,
            body,
        });
        self.events.last().expect("just pushed")
    }

    pub fn events_after(&self, seq: u64) -> &[SessionEvent] {
        let start = (seq as usize).min(self.events.len());
        &self.events[start..]
    }

    pub fn id(&self) -> &str {
        &self.state.id
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: each reading advances by a fixed step.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    step: Duration,
    ticks: AtomicU64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        Self { start, step, ticks: AtomicU64::new(0) }
    }

    /// 2025-01-01T00:00:00Z, one second per reading.
    pub fn fixture() -> Self {
        Self::new(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(), Duration::seconds(1))
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.start + self.step * n as i32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn created() -> EventBody {
        EventBody::SessionCreated {
            session_id: "s1".into(),
            problem: "p".into(),
            roster: vec!["ux_designer".into(), "market_analyst".into()],
            seed: 9,
        }
    }

    fn msg(seq: u64, speaker: Speaker) -> EventBody {
        EventBody::MessageAppended {
            message: Message {
                seq,
                speaker,
                text: format!("m{seq}"),
                mode: ThinkingMode::Explore,
                timestamp: Utc.timestamp_opt(seq as i64, 0).unwrap(),
                highlights: vec![],
            },
        }
    }

    #[test]
    fn counters_follow_speakers() {
        let clock = SteppingClock::fixture();
        let mut s = Session::default();
        s.record(created(), clock.now());
        s.record(msg(1, Speaker::Facilitator), clock.now());
        s.record(msg(2, Speaker::Persona("ux_designer".into())), clock.now());
        s.record(msg(3, Speaker::User), clock.now());
        s.record(msg(4, Speaker::Persona("market_analyst".into())), clock.now());
        assert_eq!(s.state.ai_turns_since_facilitator, 2);
        assert_eq!(s.state.last_speaker.as_deref(), Some("market_analyst"));
        s.record(msg(5, Speaker::Facilitator), clock.now());
        assert_eq!(s.state.ai_turns_since_facilitator, 0);
        assert_eq!(s.state.last_speaker.as_deref(), Some("market_analyst"));
    }

    #[test]
    fn replay_equals_live() {
        let clock = SteppingClock::fixture();
        let mut s = Session::default();
        s.record(created(), clock.now());
        s.record(msg(1, Speaker::Facilitator), clock.now());
        s.record(EventBody::ModeChanged { mode: ThinkingMode::Focus }, clock.now());
        s.record(EventBody::HighlightsAttached { seq: 1, phrases: vec!["m1".into()] }, clock.now());
        let replayed = SessionState::replay(&s.events).unwrap();
        assert_eq!(replayed, s.state);
    }

    #[test]
    fn replay_rejects_gaps_and_bad_events() {
        let clock = SteppingClock::fixture();
        let mut s = Session::default();
        s.record(created(), clock.now());
        s.record(msg(1, Speaker::User), clock.now());
        s.record(msg(2, Speaker::User), clock.now());
        let mut gap = s.events.clone();
        gap.remove(1);
        assert!(matches!(SessionState::replay(&gap), Err(LogError::CorruptLog { seq: 2, .. })));
        let mut stranger = s.events.clone();
        stranger[2].body = msg(2, Speaker::Persona("chef".into()));
        assert!(matches!(SessionState::replay(&stranger), Err(LogError::CorruptLog { seq: 3, .. })));
        assert!(matches!(SessionState::replay(&[]), Err(LogError::NoSuchSession(_))));
    }

    #[test]
    fn event_json_is_self_describing() {
        let ev = SessionEvent {
            schema: EVENT_SCHEMA_VERSION,
            seq: 1,
            timestamp: Utc.timestamp_opt(0, 0).unwrap(),
            body: EventBody::ModeChanged { mode: ThinkingMode::Focus },
        };
        let line = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            line,
            r#"{"schema":1,"seq":1,"timestamp":"1970-01-01T00:00:00Z","kind":"mode_changed","payload":{"mode":"focus"}}"#
        );
        let back: SessionEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn stepping_clock_advances() {
        let c = SteppingClock::fixture();
        let a = c.now();
        let b = c.now();
        assert_eq!(b - a, Duration::seconds(1));
    }
}
