//! Session orchestration: setup, initial thoughts, first speaker, ranked
//! turn-taking, user turns, facilitation and thinking-mode switches.
//!
//! Every command runs against a scratch copy of the session and is swapped
//! in only when it succeeds, so a provider failure never leaves a partial
//! transcript behind.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compactor::{message_line, render_context, transcript_view, CompactionPolicy, Compactor};
use crate::enrichment::{self, HighlightSet};
use crate::error::{EngineError, EnrichmentError, GatewayError};
use crate::gateway::{CompletionResult, Gateway, Parsed};
use crate::persona::{Catalog, PersonaConfig, ToneInstruction};
use crate::prompt::{render, render_welcome, Bindings, PromptKind};
use crate::session::{Clock, EventBody, Message, Phase, Session, Speaker, ThinkingMode, TurnChoice};
use crate::wordlimit::WordLimitPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub compaction: CompactionPolicy,
    /// AI turns without facilitation before the need check runs.
    pub facilitator_interval: u32,
    pub word_limit: WordLimitPolicy,
    pub roster_min: usize,
    pub roster_max: usize,
    /// Probability of picking a lower-ranked candidate.
    pub randomization: f64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            compaction: CompactionPolicy::default(),
            facilitator_interval: 6,
            word_limit: WordLimitPolicy::default(),
            roster_min: 2,
            roster_max: 9,
            randomization: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StartOutcome {
    /// Initial thoughts in roster order.
    pub initial_thoughts: Vec<(String, String)>,
    pub first: Message,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub choice: TurnChoice,
    pub rng_word_pos: u64,
    /// Set when the ranking reply was unusable and the rotation fallback ran.
    pub fallback: Option<String>,
}

/// Picks an index from a ranking: the top entry with probability
/// `1 - randomization`, otherwise uniform over the rest.
pub fn draw_choice(len: usize, rng: &mut ChaCha8Rng, randomization: f64) -> (usize, bool) {
    if len < 2 {
        return (0, false);
    }
    let u: f64 = rng.gen();
    if u >= randomization {
        (0, false)
    } else {
        (1 + rng.gen_range(0..len - 1), true)
    }
}

pub fn session_rng(seed: u64, word_pos: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(word_pos as u128);
    rng
}

pub struct Engine {
    catalog: Arc<Catalog>,
    gateway: Gateway,
    settings: EngineSettings,
    clock: Arc<dyn Clock>,
    tone: ToneInstruction,
}

impl Engine {
    pub fn new(catalog: Arc<Catalog>, gateway: Gateway, settings: EngineSettings, clock: Arc<dyn Clock>) -> Self {
        Self {
            catalog,
            gateway,
            settings,
            clock,
            tone: ToneInstruction::global(),
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    fn record(&self, session: &mut Session, body: EventBody) {
        let now = self.clock.now();
        session.record(body, now);
    }

    fn append(&self, session: &mut Session, speaker: Speaker, text: String) -> Message {
        let message = Message {
            seq: session.state.transcript.len() as u64 + 1,
            speaker,
            text,
            mode: session.state.mode,
            timestamp: self.clock.now(),
            highlights: Vec::new(),
        };
        session.record(EventBody::MessageAppended { message: message.clone() }, message.timestamp);
        message
    }

    fn log_error(&self, session: &mut Session, message: String) {
        log::warn!("session {}: {message}", session.id());
        self.record(session, EventBody::ErrorLogged { message });
    }

    fn roster_configs(&self, session: &Session) -> Vec<PersonaConfig> {
        session
            .state
            .roster
            .iter()
            .filter_map(|id| self.catalog.get(id).cloned())
            .collect()
    }

    fn persona(&self, id: &str) -> &PersonaConfig {
        self.catalog.get(id).expect("roster ids are validated at creation")
    }

    fn require_phase(&self, session: &Session, phase: Phase, action: &str) -> Result<(), EngineError> {
        if session.state.phase == phase {
            Ok(())
        } else {
            Err(EngineError::InvalidPhase {
                action: action.to_string(),
                phase: session.state.phase.to_string(),
            })
        }
    }

    fn transact<T>(
        &self,
        session: &mut Session,
        f: impl FnOnce(&mut Session) -> Result<T, EngineError>,
    ) -> Result<T, EngineError> {
        let mut scratch = session.clone();
        let out = f(&mut scratch)?;
        *session = scratch;
        Ok(out)
    }

    pub fn create_session(
        &self,
        id: &str,
        problem: &str,
        roster: &[String],
        seed: u64,
    ) -> Result<(Session, Message), EngineError> {
        if problem.trim().is_empty() {
            return Err(EngineError::EmptyProblem);
        }
        let (min, max) = (self.settings.roster_min, self.settings.roster_max);
        if roster.len() < min || roster.len() > max {
            return Err(EngineError::RosterOutOfBounds { len: roster.len(), min, max });
        }
        for (i, pid) in roster.iter().enumerate() {
            let p = self
                .catalog
                .get(pid)
                .ok_or_else(|| EngineError::UnknownPersona(pid.clone()))?;
            if p.is_facilitator {
                return Err(EngineError::FacilitatorInRoster);
            }
            if roster[..i].contains(pid) {
                return Err(EngineError::DuplicatePersona(pid.clone()));
            }
        }
        let mut session = Session::default();
        self.record(
            &mut session,
            EventBody::SessionCreated {
                session_id: id.to_string(),
                problem: problem.to_string(),
                roster: roster.to_vec(),
                seed,
            },
        );
        let names: Vec<&str> = roster.iter().map(|id| self.persona(id).display_name.as_str()).collect();
        let welcome = render_welcome(problem, &names)?;
        let message = self.append(&mut session, Speaker::Facilitator, welcome);
        Ok((session, message))
    }

    fn initial_thought_request(&self, session: &Session, pid: &str) -> Result<crate::prompt::PromptRequest, EngineError> {
        let b = Bindings::new()
            .with("persona", self.persona(pid).role_instruction.as_str())
            .with("task", session.state.problem.as_str())
            .with("tone", self.tone.text.as_str());
        Ok(render(PromptKind::InitialThought, &b)?)
    }

    pub fn start(&self, session: &mut Session) -> Result<StartOutcome, EngineError> {
        self.require_phase(session, Phase::Created, "start")?;
        self.transact(session, |s| {
            let roster = s.state.roster.clone();
            let configs = self.roster_configs(s);
            let reqs = roster
                .iter()
                .map(|pid| self.initial_thought_request(s, pid))
                .collect::<Result<Vec<_>, _>>()?;
            let mut thoughts = Vec::with_capacity(roster.len());
            for (pid, res) in roster.iter().zip(self.gateway.complete_batch(&reqs, &configs)) {
                thoughts.push((pid.clone(), res?.text().to_string()));
            }

            let responses = thoughts
                .iter()
                .map(|(pid, t)| format!("{}: {}", self.persona(pid).display_name, t))
                .collect::<Vec<_>>()
                .join("\n");
            let b = Bindings::new()
                .with("task", s.state.problem.as_str())
                .with("tone", self.tone.text.as_str())
                .with("persona_responses", responses);
            let req = render(PromptKind::FirstSpeakerSelection, &b)?;
            let (chosen, fallback) = match self.gateway.complete(&req, &configs) {
                Ok(CompletionResult { parsed: Parsed::PersonaName(id), .. }) => (id, None),
                Ok(other) => (roster[0].clone(), Some(format!("unexpected first-speaker reply {:?}", other.raw_text))),
                Err(GatewayError::ParseFailure { raw_text }) => (
                    roster[0].clone(),
                    Some(format!("first speaker reply {raw_text:?} names no roster persona; using {}", roster[0])),
                ),
                Err(e) => return Err(e.into()),
            };

            let idx = roster.iter().position(|p| *p == chosen).expect("chosen from roster");
            let first_req = &reqs[idx];
            let (text, _) = self.settings.word_limit.enforce(thoughts[idx].1.clone(), || {
                self.gateway.complete(first_req, &configs).map(|r| r.text().to_string())
            })?;

            if let Some(reason) = fallback {
                self.log_error(s, reason);
            }
            let word_pos = s.state.rng_word_pos;
            self.record(
                s,
                EventBody::TurnChoice {
                    choice: TurnChoice { chosen: chosen.clone(), ranking: vec![chosen.clone()], randomized: false },
                    rng_word_pos: word_pos,
                },
            );
            self.record(s, EventBody::PhaseChanged { phase: Phase::Running });
            let first = self.append(s, Speaker::Persona(chosen), text);
            Ok(StartOutcome { initial_thoughts: thoughts, first })
        })
    }

    /// Ranks everyone except the last speaker and draws the next one.
    /// Does not mutate the session; the caller records the result.
    pub fn select_next_speaker(&self, session: &Session, previous_text: &str) -> Result<Selection, EngineError> {
        let st = &session.state;
        let candidates: Vec<String> = st
            .roster
            .iter()
            .filter(|p| Some(*p) != st.last_speaker.as_ref())
            .cloned()
            .collect();
        if candidates.len() == 1 {
            return Ok(Selection {
                choice: TurnChoice { chosen: candidates[0].clone(), ranking: candidates, randomized: false },
                rng_word_pos: st.rng_word_pos,
                fallback: None,
            });
        }
        let configs: Vec<PersonaConfig> = candidates.iter().map(|id| self.persona(id).clone()).collect();
        let names: Vec<&str> = configs.iter().map(|p| p.display_name.as_str()).collect();
        let b = Bindings::new()
            .with("task", st.problem.as_str())
            .with("tone", self.tone.text.as_str())
            .with("previous", previous_text)
            .with("personas", names.join(", "));
        let req = render(PromptKind::PersonaRanking, &b)?;
        match self.gateway.complete(&req, &configs) {
            Ok(res) => {
                let Parsed::PersonaRanking(ranked) = res.parsed else {
                    return Ok(self.rotation_fallback(session, candidates, "ranking reply had the wrong shape".into()));
                };
                let ranking = complete_ranking(ranked, &configs);
                let mut rng = session_rng(st.rng_seed, st.rng_word_pos);
                let (idx, randomized) = draw_choice(ranking.len(), &mut rng, self.settings.randomization);
                Ok(Selection {
                    choice: TurnChoice { chosen: ranking[idx].clone(), ranking, randomized },
                    rng_word_pos: rng.get_word_pos() as u64,
                    fallback: None,
                })
            }
            Err(GatewayError::ParseFailure { raw_text }) => Ok(self.rotation_fallback(
                session,
                candidates,
                format!("ranking reply {raw_text:?} unusable; rotating roster"),
            )),
            Err(e) => Err(e.into()),
        }
    }

    fn rotation_fallback(&self, session: &Session, candidates: Vec<String>, reason: String) -> Selection {
        let st = &session.state;
        let ranking = match st.last_speaker.as_ref().and_then(|l| st.roster.iter().position(|p| p == l)) {
            Some(pos) => st.roster[pos + 1..]
                .iter()
                .chain(st.roster[..pos].iter())
                .cloned()
                .collect(),
            None => candidates,
        };
        Selection {
            choice: TurnChoice { chosen: ranking[0].clone(), ranking, randomized: false },
            rng_word_pos: st.rng_word_pos,
            fallback: Some(reason),
        }
    }

    fn history_context(&self, session: &mut Session) -> String {
        let compactor = Compactor::new(self.settings.compaction, &self.gateway, &self.catalog);
        let compaction = compactor.compact_cached(&session.state.transcript, &session.state.summary_cache);
        if compaction.history.degraded {
            self.log_error(session, "summarizer failed; older history kept verbatim".into());
        }
        if !compaction.fresh.is_empty() {
            self.record(session, EventBody::CompactionPerformed { summaries: compaction.fresh });
        }
        render_context(&self.catalog, &compaction.history)
    }

    fn last_line(&self, session: &Session) -> String {
        session
            .state
            .transcript
            .last()
            .map(|m| message_line(&self.catalog, m))
            .unwrap_or_default()
    }

    /// Generates one persona turn in the prompt family of the current mode.
    fn persona_turn(&self, s: &mut Session, pid: &str, previous: &str) -> Result<Message, EngineError> {
        let history = self.history_context(s);
        let kind = match s.state.mode {
            ThinkingMode::Explore => PromptKind::DivergentTurn,
            ThinkingMode::Focus => PromptKind::ConvergentTurn,
        };
        let b = Bindings::new()
            .with("persona_instruction", self.persona(pid).role_instruction.as_str())
            .with("task", s.state.problem.as_str())
            .with("history_context", history)
            .with("previous", previous)
            .with("tone", self.tone.text.as_str());
        let req = render(kind, &b)?;
        let first = self.gateway.complete(&req, &[])?.text().to_string();
        let (text, _) = self
            .settings
            .word_limit
            .enforce(first, || self.gateway.complete(&req, &[]).map(|r| r.text().to_string()))?;
        Ok(self.append(s, Speaker::Persona(pid.to_string()), text))
    }

    pub fn continue_discussion(&self, session: &mut Session) -> Result<Vec<Message>, EngineError> {
        self.require_phase(session, Phase::Running, "continue")?;
        let mut out = self.transact(session, |s| {
            let previous = self.last_line(s);
            let sel = self.select_next_speaker(s, &previous)?;
            if let Some(reason) = sel.fallback.clone() {
                self.log_error(s, reason);
            }
            let chosen = sel.choice.chosen.clone();
            self.record(s, EventBody::TurnChoice { choice: sel.choice, rng_word_pos: sel.rng_word_pos });
            Ok(vec![self.persona_turn(s, &chosen, &previous)?])
        })?;
        out.extend(self.auto_facilitator_check(session));
        Ok(out)
    }

    /// The user speaks; the best-suited colleague answers.
    pub fn user_message(&self, session: &mut Session, text: &str) -> Result<Vec<Message>, EngineError> {
        self.require_phase(session, Phase::Running, "message")?;
        if text.trim().is_empty() {
            return Err(EngineError::EmptyMessage);
        }
        let mut out = self.transact(session, |s| {
            let user = self.append(s, Speaker::User, text.to_string());
            let configs = self.roster_configs(s);
            let history = self.history_context(s);
            let names: Vec<&str> = configs.iter().map(|p| p.display_name.as_str()).collect();
            let b = Bindings::new()
                .with("history_context", history)
                .with("user_message", text)
                .with("persona_list", names.join(", "));
            let req = render(PromptKind::UserResponseSelection, &b)?;
            let previous = message_line(&self.catalog, &user);
            let choice = match self.gateway.complete(&req, &configs) {
                Ok(CompletionResult { parsed: Parsed::PersonaName(id), .. }) => Selection {
                    choice: TurnChoice { chosen: id.clone(), ranking: vec![id], randomized: false },
                    rng_word_pos: s.state.rng_word_pos,
                    fallback: None,
                },
                Ok(other) => self.responder_fallback(s, &previous, &other.raw_text)?,
                Err(GatewayError::ParseFailure { raw_text }) => self.responder_fallback(s, &previous, &raw_text)?,
                Err(e) => return Err(e.into()),
            };
            if let Some(reason) = choice.fallback.clone() {
                self.log_error(s, reason);
            }
            let responder = choice.choice.chosen.clone();
            self.record(s, EventBody::TurnChoice { choice: choice.choice, rng_word_pos: choice.rng_word_pos });
            let reply = self.persona_turn(s, &responder, &previous)?;
            Ok(vec![user, reply])
        })?;
        out.extend(self.auto_facilitator_check(session));
        Ok(out)
    }

    /// An unusable responder reply falls back to ranked speaker selection.
    fn responder_fallback(&self, s: &Session, previous: &str, raw: &str) -> Result<Selection, EngineError> {
        let mut sel = self.select_next_speaker(s, previous)?;
        let note = format!("responder reply {raw:?} names no roster persona; selecting {}", sel.choice.chosen);
        sel.fallback = Some(match sel.fallback {
            Some(inner) => format!("{note}; {inner}"),
            None => note,
        });
        Ok(sel)
    }

    pub fn call_facilitator(&self, session: &mut Session, manual: bool) -> Result<Message, EngineError> {
        self.require_phase(session, Phase::Running, "call_facilitator")?;
        self.transact(session, |s| {
            let b = Bindings::new()
                .with("facilitator_intro", self.catalog.facilitator().role_instruction.as_str())
                .with("task", s.state.problem.as_str())
                .with("transcript", transcript_view(&self.catalog, &s.state.transcript));
            let req = render(PromptKind::FacilitatorMain, &b)?;
            let text = self.gateway.complete(&req, &[])?.text().to_string();
            if !manual {
                log::info!("session {}: facilitator stepped in", s.id());
            }
            Ok(self.append(s, Speaker::Facilitator, text))
        })
    }

    /// Runs after each persona turn. Failures are logged and count as "no".
    pub fn auto_facilitator_check(&self, session: &mut Session) -> Option<Message> {
        if session.state.phase != Phase::Running
            || session.state.ai_turns_since_facilitator < self.settings.facilitator_interval
        {
            return None;
        }
        let b = Bindings::new()
            .with("conversation_history", transcript_view(&self.catalog, &session.state.transcript))
            .with("task", session.state.problem.as_str());
        let req = render(PromptKind::FacilitatorNeedCheck, &b).expect("bindings match template");
        let needed = match self.gateway.complete(&req, &[]) {
            Ok(res) => matches!(res.parsed, Parsed::BooleanFlag(true)),
            Err(e) => {
                self.log_error(session, format!("facilitator check failed: {e}"));
                false
            }
        };
        if !needed {
            return None;
        }
        match self.call_facilitator(session, false) {
            Ok(m) => Some(m),
            Err(e) => {
                self.log_error(session, format!("automatic facilitation failed: {e}"));
                None
            }
        }
    }

    pub fn set_mode(&self, session: &mut Session, mode: ThinkingMode) -> Result<(), EngineError> {
        self.require_phase(session, Phase::Running, "set_mode")?;
        if session.state.mode != mode {
            self.record(session, EventBody::ModeChanged { mode });
        }
        Ok(())
    }

    pub fn close(&self, session: &mut Session) -> Result<(), EngineError> {
        if session.state.phase == Phase::Closed {
            return Err(EngineError::InvalidPhase { action: "close".into(), phase: "closed".into() });
        }
        self.record(session, EventBody::PhaseChanged { phase: Phase::Closed });
        Ok(())
    }

    /// Computes highlights for one message and attaches them.
    pub fn highlight(&self, session: &mut Session, seq: u64) -> Result<HighlightSet, EngineError> {
        let message = session
            .state
            .message(seq)
            .cloned()
            .ok_or(EngineError::UnknownMessage(seq))?;
        self.transact(session, |s| {
            let context = self.history_context(s);
            let set = match enrichment::extract_highlights(&message, &context, &self.gateway) {
                Ok(set) => set,
                Err(EnrichmentError::Gateway(e)) => return Err(e.into()),
                Err(_) => HighlightSet { message_seq: seq, phrases: Vec::new() },
            };
            self.attach_highlights(s, &set);
            Ok(set)
        })
    }

    /// Attaches a highlight set computed elsewhere, re-validating it first.
    pub fn attach_highlights(&self, session: &mut Session, set: &HighlightSet) {
        let Some(message) = session.state.message(set.message_seq) else {
            return;
        };
        let phrases = enrichment::filter_phrases(&message.text, set.phrases.clone());
        self.record(session, EventBody::HighlightsAttached { seq: set.message_seq, phrases });
    }

    pub fn summarize(&self, session: &Session) -> Result<String, EngineError> {
        let view = transcript_view(&self.catalog, &session.state.transcript);
        enrichment::summarize_discussion(&view, &self.gateway).map_err(|e| match e {
            EnrichmentError::Gateway(g) => EngineError::Gateway(g),
            _ => EngineError::EmptyMessage,
        })
    }
}

/// Keeps the model's order for the candidates it named and appends the rest,
/// most talkative first.
pub fn complete_ranking(ranked: Vec<String>, candidates: &[PersonaConfig]) -> Vec<String> {
    let mut out: Vec<String> = ranked
        .into_iter()
        .filter(|id| candidates.iter().any(|c| c.id == *id))
        .collect();
    let mut missing: Vec<&PersonaConfig> = candidates.iter().filter(|c| !out.contains(&c.id)).collect();
    missing.sort_by_key(|c| std::cmp::Reverse(c.talkativeness));
    out.extend(missing.into_iter().map(|c| c.id.clone()));
    out
}

/// One user-facing command, as sent by the API and headless scripts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Start,
    Message { text: String },
    Continue,
    CallFacilitator,
    SetMode { mode: ThinkingMode },
    Close,
    Highlight { seq: u64 },
    Summarize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionOutcome {
    Messages { messages: Vec<Message> },
    Highlights { highlights: HighlightSet },
    Summary { summary: String },
    Done,
}

impl Engine {
    pub fn apply_action(&self, session: &mut Session, action: &Action) -> Result<ActionOutcome, EngineError> {
        let messages = |messages| ActionOutcome::Messages { messages };
        Ok(match action {
            Action::Start => messages(vec![self.start(session)?.first]),
            Action::Message { text } => messages(self.user_message(session, text)?),
            Action::Continue => messages(self.continue_discussion(session)?),
            Action::CallFacilitator => messages(vec![self.call_facilitator(session, true)?]),
            Action::SetMode { mode } => {
                self.set_mode(session, *mode)?;
                ActionOutcome::Done
            }
            Action::Close => {
                self.close(session)?;
                ActionOutcome::Done
            }
            Action::Highlight { seq } => ActionOutcome::Highlights { highlights: self.highlight(session, *seq)? },
            Action::Summarize => ActionOutcome::Summary { summary: self.summarize(session)? },
        })
    }
}
