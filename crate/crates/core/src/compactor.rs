//! Conversation history compaction.
//!
//! Below the threshold the transcript passes through untouched. At or above
//! it, the trailing window stays verbatim; in the older part every user and
//! facilitator turn is kept as is, while each contiguous run of persona turns
//! is replaced by a bounded summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::Gateway;
use crate::persona::Catalog;
use crate::prompt::{render, Bindings, PromptKind};
use crate::session::{Message, Speaker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactionPolicy {
    pub threshold: usize,
    pub recent_window: usize,
    pub summary_token_cap: usize,
}

impl Default for CompactionPolicy {
    fn default() -> Self {
        Self {
            threshold: 15,
            recent_window: 8,
            summary_token_cap: 200,
        }
    }
}

impl CompactionPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.threshold == 0 || self.recent_window == 0 || self.summary_token_cap == 0 {
            return Err("compaction policy fields must be positive".into());
        }
        if self.recent_window >= self.threshold {
            return Err(format!(
                "recent_window ({}) must be below threshold ({})",
                self.recent_window, self.threshold
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HistorySegment {
    Verbatim { message: Message },
    Summary { text: String, covered_seqs: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactedHistory {
    pub older_block: Vec<HistorySegment>,
    pub recent: Vec<Message>,
    pub source_len: usize,
    /// Set when a summarizer failure forced a run to stay verbatim.
    pub degraded: bool,
}

/// A summary of one persona run, reusable while the run is unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedSummary {
    pub key: String,
    pub covered_seqs: Vec<u64>,
    pub text: String,
}

pub type SummaryCache = BTreeMap<String, CachedSummary>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Compaction {
    pub history: CompactedHistory,
    /// Summaries produced by this call that were not already cached.
    pub fresh: Vec<CachedSummary>,
}

/// Whitespace-delimited token count.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn truncate_tokens(text: &str, cap: usize) -> String {
    text.split_whitespace().take(cap).collect::<Vec<_>>().join(" ")
}

pub fn speaker_name(catalog: &Catalog, speaker: &Speaker) -> String {
    match speaker {
        Speaker::User => "User".to_string(),
        Speaker::Facilitator => catalog.facilitator().display_name.clone(),
        Speaker::Persona(id) => catalog
            .get(id)
            .map(|p| p.display_name.clone())
            .unwrap_or_else(|| id.clone()),
    }
}

pub fn message_line(catalog: &Catalog, m: &Message) -> String {
    format!("{}: {}", speaker_name(catalog, &m.speaker), m.text)
}

/// Full transcript as `Name: text` lines.
pub fn transcript_view(catalog: &Catalog, transcript: &[Message]) -> String {
    transcript
        .iter()
        .map(|m| message_line(catalog, m))
        .collect::<Vec<_>>()
        .join("\n")
}

pub const SUMMARY_PREFIX: &str = "[Earlier discussion summary] ";

fn run_key(catalog: &Catalog, run: &[&Message]) -> String {
    let mut h = Sha256::new();
    for m in run {
        h.update(m.seq.to_le_bytes());
        h.update(message_line(catalog, m).as_bytes());
        h.update([0u8]);
    }
    let first = run.first().map_or(0, |m| m.seq);
    let last = run.last().map_or(0, |m| m.seq);
    format!("{first}-{last}:{}", hex::encode(h.finalize()))
}

pub struct Compactor<'a> {
    pub policy: CompactionPolicy,
    pub summarizer: &'a Gateway,
    pub catalog: &'a Catalog,
}

impl<'a> Compactor<'a> {
    pub fn new(policy: CompactionPolicy, summarizer: &'a Gateway, catalog: &'a Catalog) -> Self {
        Self { policy, summarizer, catalog }
    }

    pub fn compact(&self, transcript: &[Message]) -> CompactedHistory {
        self.compact_cached(transcript, &SummaryCache::new()).history
    }

    pub fn compact_cached(&self, transcript: &[Message], cache: &SummaryCache) -> Compaction {
        let n = transcript.len();
        if n < self.policy.threshold {
            return Compaction {
                history: CompactedHistory {
                    older_block: Vec::new(),
                    recent: transcript.to_vec(),
                    source_len: n,
                    degraded: false,
                },
                fresh: Vec::new(),
            };
        }
        let split = n - self.policy.recent_window.min(n);
        let (older, recent) = transcript.split_at(split);

        let mut block = Vec::new();
        let mut fresh = Vec::new();
        let mut degraded = false;
        let mut i = 0;
        while i < older.len() {
            if older[i].speaker.is_anchor() {
                block.push(HistorySegment::Verbatim { message: older[i].clone() });
                i += 1;
                continue;
            }
            let start = i;
            while i < older.len() && !older[i].speaker.is_anchor() {
                i += 1;
            }
            let run: Vec<&Message> = older[start..i].iter().collect();
            let anchors: Vec<&Message> = older[..start]
                .iter()
                .rev()
                .take_while(|m| m.speaker.is_anchor())
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            let key = run_key(self.catalog, &run);
            let cached = cache
                .get(&key)
                .or_else(|| fresh.iter().find(|s: &&CachedSummary| s.key == key));
            let summary = match cached {
                Some(s) => Some(s.clone()),
                None => match self.summarize_run(&run, &anchors) {
                    Some(text) => {
                        let s = CachedSummary {
                            key,
                            covered_seqs: run.iter().map(|m| m.seq).collect(),
                            text,
                        };
                        fresh.push(s.clone());
                        Some(s)
                    }
                    None => None,
                },
            };
            match summary {
                Some(s) => block.push(HistorySegment::Summary {
                    text: s.text,
                    covered_seqs: s.covered_seqs,
                }),
                None => {
                    degraded = true;
                    block.extend(run.iter().map(|m| HistorySegment::Verbatim { message: (*m).clone() }));
                }
            }
        }
        Compaction {
            history: CompactedHistory {
                older_block: block,
                recent: recent.to_vec(),
                source_len: n,
                degraded,
            },
            fresh,
        }
    }

    /// `None` when the summarizer fails; the caller keeps the run verbatim.
    fn summarize_run(&self, run: &[&Message], anchors: &[&Message]) -> Option<String> {
        let anchor_text = if anchors.is_empty() {
            "(none)".to_string()
        } else {
            anchors.iter().map(|m| message_line(self.catalog, m)).collect::<Vec<_>>().join("\n")
        };
        let other = run.iter().map(|m| message_line(self.catalog, m)).collect::<Vec<_>>().join("\n");
        let bindings = Bindings::new()
            .with("user_facilitator_transcript", anchor_text)
            .with("other_transcript", other);
        let req = render(PromptKind::CompressionSummary, &bindings).ok()?;
        let cap = self.policy.summary_token_cap;
        let mut text = self.summarizer.complete(&req, &[]).ok()?.text().to_string();
        if token_count(&text) > cap {
            text = match self.summarizer.complete(&req, &[]) {
                Ok(retry) => retry.text().to_string(),
                Err(e) => {
                    log::warn!("re-summarize failed, truncating first summary: {e}");
                    text
                }
            };
            if token_count(&text) > cap {
                text = truncate_tokens(&text, cap);
            }
        }
        Some(text)
    }
}

/// Linearizes a compaction into the `{{history_context}}` string.
pub fn render_context(catalog: &Catalog, compacted: &CompactedHistory) -> String {
    let mut lines = Vec::with_capacity(compacted.older_block.len() + compacted.recent.len());
    for seg in &compacted.older_block {
        match seg {
            HistorySegment::Verbatim { message } => lines.push(message_line(catalog, message)),
            HistorySegment::Summary { text, .. } => lines.push(format!("{SUMMARY_PREFIX}{text}")),
        }
    }
    lines.extend(compacted.recent.iter().map(|m| message_line(catalog, m)));
    lines.join("\n")
}
