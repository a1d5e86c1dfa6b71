//! Prompt templates and placeholder substitution.
//!
//! Every template lives in `templates/<kind>.txt` and is embedded verbatim.
//! Placeholders use `{{name}}`. Substitution is single pass: a bound value is
//! never scanned for further placeholders, and brace pairs inside values are
//! broken apart so rendered text never carries a live marker.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    InitialThought,
    FirstSpeakerSelection,
    DivergentTurn,
    ConvergentTurn,
    PersonaRanking,
    FacilitatorWelcome,
    FacilitatorMain,
    FacilitatorNeedCheck,
    UserResponseSelection,
    KeyPhraseExtraction,
    DiscussionSummary,
    CompressionSummary,
}

/// Reply format the caller expects from the provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedShape {
    FreeText,
    NameOnly,
    JsonNameList,
    BooleanWord,
    JsonStringList,
}

impl fmt::Display for ExpectedShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExpectedShape::FreeText => "free_text",
            ExpectedShape::NameOnly => "name_only",
            ExpectedShape::JsonNameList => "json_name_list",
            ExpectedShape::BooleanWord => "boolean_word",
            ExpectedShape::JsonStringList => "json_string_list",
        };
        f.write_str(s)
    }
}

impl PromptKind {
    pub const ALL: [PromptKind; 12] = [
        PromptKind::InitialThought,
        PromptKind::FirstSpeakerSelection,
        PromptKind::DivergentTurn,
        PromptKind::ConvergentTurn,
        PromptKind::PersonaRanking,
        PromptKind::FacilitatorWelcome,
        PromptKind::FacilitatorMain,
        PromptKind::FacilitatorNeedCheck,
        PromptKind::UserResponseSelection,
        PromptKind::KeyPhraseExtraction,
        PromptKind::DiscussionSummary,
        PromptKind::CompressionSummary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptKind::InitialThought => "initial_thought",
            PromptKind::FirstSpeakerSelection => "first_speaker_selection",
            PromptKind::DivergentTurn => "divergent_turn",
            PromptKind::ConvergentTurn => "convergent_turn",
            PromptKind::PersonaRanking => "persona_ranking",
            PromptKind::FacilitatorWelcome => "facilitator_welcome",
            PromptKind::FacilitatorMain => "facilitator_main",
            PromptKind::FacilitatorNeedCheck => "facilitator_need_check",
            PromptKind::UserResponseSelection => "user_response_selection",
            PromptKind::KeyPhraseExtraction => "key_phrase_extraction",
            PromptKind::DiscussionSummary => "discussion_summary",
            PromptKind::CompressionSummary => "compression_summary",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Raw template bytes, exactly as shipped.
    pub fn template(self) -> &'static str {
        match self {
            PromptKind::InitialThought => include_str!("../templates/initial_thought.txt"),
            PromptKind::FirstSpeakerSelection => {
                include_str!("../templates/first_speaker_selection.txt")
            }
            PromptKind::DivergentTurn => include_str!("../templates/divergent_turn.txt"),
            PromptKind::ConvergentTurn => include_str!("../templates/convergent_turn.txt"),
            PromptKind::PersonaRanking => include_str!("../templates/persona_ranking.txt"),
            PromptKind::FacilitatorWelcome => include_str!("../templates/facilitator_welcome.txt"),
            PromptKind::FacilitatorMain => include_str!("../templates/facilitator_main.txt"),
            PromptKind::FacilitatorNeedCheck => {
                include_str!("../templates/facilitator_need_check.txt")
            }
            PromptKind::UserResponseSelection => {
                include_str!("../templates/user_response_selection.txt")
            }
            PromptKind::KeyPhraseExtraction => {
                include_str!("../templates/key_phrase_extraction.txt")
            }
            PromptKind::DiscussionSummary => include_str!("../templates/discussion_summary.txt"),
            PromptKind::CompressionSummary => include_str!("../templates/compression_summary.txt"),
        }
    }

    pub fn expected_shape(self) -> ExpectedShape {
        match self {
            PromptKind::FirstSpeakerSelection | PromptKind::UserResponseSelection => {
                ExpectedShape::NameOnly
            }
            PromptKind::PersonaRanking => ExpectedShape::JsonNameList,
            PromptKind::FacilitatorNeedCheck => ExpectedShape::BooleanWord,
            PromptKind::KeyPhraseExtraction => ExpectedShape::JsonStringList,
            _ => ExpectedShape::FreeText,
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for seg in parse_segments(self.template()) {
            if let Segment::Placeholder(name) = seg {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    /// `None` for judge prompts, which are not conversation templates.
    pub kind: Option<PromptKind>,
    pub text: String,
    pub expected_shape: ExpectedShape,
}

impl PromptRequest {
    /// Hand-built request text for a template kind (tests, replays).
    pub fn adhoc(kind: PromptKind, text: String, expected_shape: ExpectedShape) -> Self {
        Self {
            kind: Some(kind),
            text,
            expected_shape,
        }
    }

    /// A free-text judge request outside the conversation templates.
    pub fn judge(text: String) -> Self {
        Self {
            kind: None,
            text,
            expected_shape: ExpectedShape::FreeText,
        }
    }
}

/// Placeholder values for one render call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        self.0.insert(name.to_string(), value.into());
    }

    pub fn remove(&mut self, name: &str) -> Option<String> {
        self.0.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

fn parse_segments(template: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) if is_placeholder_name(&after[..close]) => {
                if open > 0 {
                    out.push(Segment::Literal(&rest[..open]));
                }
                out.push(Segment::Placeholder(&after[..close]));
                rest = &after[close + 2..];
            }
            _ => {
                out.push(Segment::Literal(&rest[..open + 2]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        out.push(Segment::Literal(rest));
    }
    out
}

/// Breaks up `{{` and `}}` runs so a value can never form a marker.
pub fn escape_value(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    let mut prev = None;
    for c in value.chars() {
        if (c == '{' || c == '}') && prev == Some(c) {
            out.push(' ');
        }
        out.push(c);
        prev = Some(c);
    }
    out
}

pub fn render(kind: PromptKind, bindings: &Bindings) -> Result<PromptRequest, PromptError> {
    let segments = parse_segments(kind.template());
    let declared = kind.placeholders();
    if let Some(unknown) = bindings.0.keys().find(|k| !declared.contains(&k.as_str())) {
        return Err(PromptError::UnknownPlaceholder(unknown.clone()));
    }
    let mut text = String::with_capacity(kind.template().len() + 256);
    for seg in segments {
        match seg {
            Segment::Literal(s) => text.push_str(s),
            Segment::Placeholder(name) => {
                let value = bindings
                    .get(name)
                    .ok_or_else(|| PromptError::MissingPlaceholder(name.to_string()))?;
                text.push_str(&escape_value(value));
            }
        }
    }
    Ok(PromptRequest {
        kind: Some(kind),
        text,
        expected_shape: kind.expected_shape(),
    })
}

/// Joins names as "A", "A and B", or "A, B, and C".
pub fn join_names<S: AsRef<str>>(names: &[S]) -> String {
    match names {
        [] => String::new(),
        [one] => one.as_ref().to_string(),
        [a, b] => format!("{} and {}", a.as_ref(), b.as_ref()),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(AsRef::as_ref).collect();
            format!("{}, and {}", head.join(", "), last.as_ref())
        }
    }
}

/// The facilitator's opening line. Rendered locally, never sent to a provider.
pub fn render_welcome<S: AsRef<str>>(problem: &str, persona_names: &[S]) -> Result<String, PromptError> {
    if persona_names.is_empty() {
        return Err(PromptError::EmptyRoster);
    }
    let bindings = Bindings::new()
        .with("problem", problem)
        .with("persona_names", join_names(persona_names));
    Ok(render(PromptKind::FacilitatorWelcome, &bindings)?.text)
}

pub fn fingerprint_text(template: &str) -> String {
    hex::encode(Sha256::digest(template.as_bytes()))
}

/// SHA-256 of the raw template, hex encoded.
pub fn golden_fingerprint(kind: PromptKind) -> String {
    fingerprint_text(kind.template())
}

/// Pinned fingerprints, one `kind sha256` pair per line.
pub const FINGERPRINT_MANIFEST: &str = include_str!("../templates/fingerprints.txt");

pub fn pinned_fingerprints() -> BTreeMap<String, String> {
    FINGERPRINT_MANIFEST
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            Some((it.next()?.to_string(), it.next()?.to_string()))
        })
        .collect()
}
