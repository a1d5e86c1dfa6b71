//! Key-phrase highlights and on-demand discussion summaries.

use serde::{Deserialize, Serialize};

use crate::error::{EnrichmentError, GatewayError};
use crate::gateway::{Gateway, Parsed};
use crate::prompt::{render, Bindings, PromptKind};
use crate::session::Message;

pub const MAX_PHRASES: usize = 2;
pub const MAX_PHRASE_WORDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightSet {
    pub message_seq: u64,
    pub phrases: Vec<String>,
}

/// A phrase is kept only if it has 1 to 4 words and occurs verbatim
/// (case-sensitive) in the message text.
pub fn phrase_is_valid(text: &str, phrase: &str) -> bool {
    let words = phrase.split_whitespace().count();
    !phrase.trim().is_empty()
        && phrase == phrase.trim()
        && (1..=MAX_PHRASE_WORDS).contains(&words)
        && text.contains(phrase)
}

pub fn filter_phrases(text: &str, candidates: Vec<String>) -> Vec<String> {
    let mut kept: Vec<String> = Vec::new();
    for p in candidates {
        if kept.len() == MAX_PHRASES {
            break;
        }
        if phrase_is_valid(text, &p) && !kept.contains(&p) {
            kept.push(p);
        }
    }
    kept
}

impl HighlightSet {
    pub fn is_valid_for(&self, message: &Message) -> bool {
        self.message_seq == message.seq
            && self.phrases.len() <= MAX_PHRASES
            && self.phrases.iter().all(|p| phrase_is_valid(&message.text, p))
    }
}

pub fn extract_highlights(
    message: &Message,
    context: &str,
    gateway: &Gateway,
) -> Result<HighlightSet, EnrichmentError> {
    if message.text.trim().is_empty() {
        return Err(EnrichmentError::EmptyMessage);
    }
    let bindings = Bindings::new()
        .with("context", context)
        .with("text", message.text.as_str());
    let req = render(PromptKind::KeyPhraseExtraction, &bindings).expect("bindings match template");
    let phrases = match gateway.complete(&req, &[]) {
        Ok(res) => match res.parsed {
            Parsed::PhraseList(list) => filter_phrases(&message.text, list),
            _ => Vec::new(),
        },
        Err(GatewayError::ParseFailure { raw_text }) => {
            log::debug!("highlight reply not a list: {raw_text:?}");
            Vec::new()
        }
        Err(e) => return Err(e.into()),
    };
    Ok(HighlightSet { message_seq: message.seq, phrases })
}

pub fn summarize_discussion(transcript_view: &str, gateway: &Gateway) -> Result<String, EnrichmentError> {
    if transcript_view.trim().is_empty() {
        return Err(EnrichmentError::EmptyTranscript);
    }
    let req = render(
        PromptKind::DiscussionSummary,
        &Bindings::new().with("transcript", transcript_view),
    )
    .expect("bindings match template");
    let res = gateway.complete(&req, &[])?;
    Ok(res.text().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ProviderProfile, ScriptEntry, ScriptedMock};
    use crate::session::{Speaker, ThinkingMode};
    use chrono::Utc;
    use std::sync::Arc;

    fn msg(text: &str) -> Message {
        Message {
            seq: 4,
            speaker: Speaker::Persona("ux_designer".into()),
            text: text.into(),
            mode: ThinkingMode::Explore,
            timestamp: Utc::now(),
            highlights: vec![],
        }
    }

    fn gw(entries: Vec<ScriptEntry>) -> (Arc<ScriptedMock>, Gateway) {
        let mock = Arc::new(ScriptedMock::new(entries, 0));
        (mock.clone(), Gateway::new(mock, ProviderProfile { max_retries: 0, ..ProviderProfile::offline() }))
    }

    #[test]
    fn both_valid_phrases_kept() {
        let (_, g) = gw(vec![ScriptEntry::phrases(r#"["user experience","machine learning"]"#)]);
        let m = msg("Good user experience needs machine learning that adapts.");
        let h = extract_highlights(&m, "ctx", &g).unwrap();
        assert_eq!(h.phrases, ["user experience", "machine learning"]);
        assert!(h.is_valid_for(&m));
    }

    #[test]
    fn long_absent_and_extra_phrases_dropped() {
        let (_, g) = gw(vec![ScriptEntry::phrases(
            "['one two three four five six', 'not here', 'Lighting', 'lighting', 'sync', 'songs']",
        )]);
        let m = msg("one two three four five six: lighting should sync with songs");
        let h = extract_highlights(&m, "ctx", &g).unwrap();
        assert_eq!(h.phrases, ["lighting", "sync"]);
    }

    #[test]
    fn unparseable_reply_yields_empty_set() {
        let (_, g) = gw(vec![ScriptEntry::phrases("lighting, sync")]);
        let m = msg("lighting should sync");
        assert!(extract_highlights(&m, "", &g).unwrap().phrases.is_empty());
        assert_eq!(m.text, "lighting should sync");
    }

    #[test]
    fn summary_prompt_and_empty_transcript() {
        let (mock, g) = gw(vec![ScriptEntry::free("Team leaned toward duet mode.")]);
        assert_eq!(summarize_discussion("User: hi", &g).unwrap(), "Team leaned toward duet mode.");
        assert!(mock.recorded()[0].text.contains("max 3 sentences"));
        assert_eq!(summarize_discussion("  ", &g), Err(EnrichmentError::EmptyTranscript));
    }
}
