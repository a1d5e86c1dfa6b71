//! Drives a whole session from a JSON script, without a server.

use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::engine::{Action, ActionOutcome, Engine, EngineSettings};
use crate::error::EngineError;
use crate::gateway::{ChatProvider, Gateway, ProviderProfile, ScriptEntry};
use crate::persona::Catalog;
use crate::session::{Clock, Session, SteppingClock, SystemClock};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClockSpec {
    Stepping { start: DateTime<Utc>, step_secs: i64 },
    System,
}

impl Default for ClockSpec {
    fn default() -> Self {
        ClockSpec::Stepping {
            start: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            step_secs: 1,
        }
    }
}

impl ClockSpec {
    pub fn build(&self) -> Arc<dyn Clock> {
        match self {
            ClockSpec::Stepping { start, step_secs } => {
                Arc::new(SteppingClock::new(*start, Duration::seconds(*step_secs)))
            }
            ClockSpec::System => Arc::new(SystemClock),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadlessScript {
    pub session_id: String,
    pub problem: String,
    pub roster: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockSpec,
    /// Canned provider replies. Empty means a live or simulated provider
    /// is supplied by the caller.
    #[serde(default)]
    pub mock: Vec<ScriptEntry>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadlessRun {
    pub session: Session,
    pub outcomes: Vec<ActionOutcome>,
}

/// Runs every action in order and stops at the first error.
pub fn run_script(
    script: &HeadlessScript,
    catalog: Arc<Catalog>,
    provider: Arc<dyn ChatProvider>,
    profile: ProviderProfile,
    settings: EngineSettings,
) -> Result<HeadlessRun, (EngineError, Option<Session>)> {
    let engine = Engine::new(catalog, Gateway::new(provider, profile), settings, script.clock.build());
    let (mut session, _) = engine
        .create_session(&script.session_id, &script.problem, &script.roster, script.seed)
        .map_err(|e| (e, None))?;
    let mut outcomes = Vec::with_capacity(script.actions.len());
    for action in &script.actions {
        match engine.apply_action(&mut session, action) {
            Ok(o) => outcomes.push(o),
            Err(e) => return Err((e, Some(session))),
        }
    }
    Ok(HeadlessRun { session, outcomes })
}
