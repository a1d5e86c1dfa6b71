//! Reply length policy for persona turns.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordLimitPolicy {
    pub max_sentences: usize,
    pub max_words: usize,
}

impl Default for WordLimitPolicy {
    fn default() -> Self {
        Self { max_sentences: 2, max_words: 60 }
    }
}

/// Lowercased tokens that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "etc.", "vs.", "cf.", "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.",
    "sr.", "approx.", "incl.", "dept.", "fig.", "no.", "u.s.", "a.m.", "p.m.",
];

fn is_abbreviation(token: &str) -> bool {
    let t = token.trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    if ABBREVIATIONS.contains(&t.as_str()) {
        return true;
    }
    // single initials such as "J."
    let mut chars = t.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

/// Splits on terminal punctuation followed by whitespace or end of text.
/// Closing quotes and brackets stay with their sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'.' || b == b'!' || b == b'?' {
            let mut end = i + 1;
            while end < bytes.len() && matches!(bytes[end], b'.' | b'!' | b'?' | b'"' | b'\'' | b')' | b']') {
                end += 1;
            }
            let at_boundary = end == bytes.len() || bytes[end].is_ascii_whitespace();
            let token_start = text[..i].rfind(char::is_whitespace).map_or(0, |p| p + 1);
            let token = &text[token_start..end];
            if at_boundary && !(b == b'.' && is_abbreviation(token.trim_end_matches(['"', '\'', ')', ']']))) {
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
            i = end;
        } else {
            i += 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

impl WordLimitPolicy {
    pub fn exceeds(&self, text: &str) -> bool {
        split_sentences(text).len() > self.max_sentences || word_count(text) > self.max_words
    }

    /// Cuts at the end of the last allowed sentence, then at the word cap.
    pub fn truncate(&self, text: &str) -> String {
        let sentences = split_sentences(text);
        let kept = sentences[..sentences.len().min(self.max_sentences)].join(" ");
        if word_count(&kept) > self.max_words {
            kept.split_whitespace().take(self.max_words).collect::<Vec<_>>().join(" ")
        } else {
            kept
        }
    }

    /// One regeneration for an over-long reply, then truncation.
    /// The flag reports whether any enforcement happened.
    pub fn enforce<E>(
        &self,
        text: String,
        regenerate: impl FnOnce() -> Result<String, E>,
    ) -> Result<(String, bool), E> {
        if !self.exceeds(&text) {
            return Ok((text, false));
        }
        let retry = regenerate()?;
        if !self.exceeds(&retry) {
            return Ok((retry, true));
        }
        Ok((self.truncate(&retry), true))
    }
}

/// Checks a reply without regeneration.
pub fn enforce_word_limit(text: &str, limit: &WordLimitPolicy) -> (String, bool) {
    if limit.exceeds(text) {
        (limit.truncate(text), true)
    } else {
        (text.to_string(), false)
    }
}
