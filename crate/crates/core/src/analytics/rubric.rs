use std::fmt;

use serde::{Deserialize, Serialize};

use super::{count, real, Real};
use crate::error::AnalyticsError;
use crate::gateway::Gateway;
use crate::prompt::PromptRequest;

const ORIGINALITY: &str = include_str!("../../judge/originality.txt");
const PRAGMATIC_PREAMBLE: &str = include_str!("../../judge/pragmatic_preamble.txt");
const SENTIMENT: &str = include_str!("../../judge/pragmatic_sentiment.txt");
const FORMALITY: &str = include_str!("../../judge/pragmatic_formality.txt");
const DIRECTNESS: &str = include_str!("../../judge/pragmatic_directness.txt");
const RELATIONSHIP: &str = include_str!("../../judge/pragmatic_relationship.txt");
const PARTICIPATION: &str = include_str!("../../judge/pragmatic_participation.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricDimension {
    Originality,
    Sentiment,
    Formality,
    Directness,
    Relationship,
    Participation,
}

impl RubricDimension {
    pub const ALL: [RubricDimension; 6] = [
        RubricDimension::Originality,
        RubricDimension::Sentiment,
        RubricDimension::Formality,
        RubricDimension::Directness,
        RubricDimension::Relationship,
        RubricDimension::Participation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RubricDimension::Originality => "Originality",
            RubricDimension::Sentiment => "Sentiment",
            RubricDimension::Formality => "Formality",
            RubricDimension::Directness => "Directness",
            RubricDimension::Relationship => "Relationship",
            RubricDimension::Participation => "Participation",
        }
    }

    /// Inclusive rating scale.
    pub fn scale(self) -> (u32, u32) {
        match self {
            RubricDimension::Originality => (1, 5),
            _ => (1, 7),
        }
    }

    /// The verbatim rubric text for this dimension.
    pub fn rubric(self) -> String {
        let block = match self {
            RubricDimension::Originality => return ORIGINALITY.to_string(),
            RubricDimension::Sentiment => SENTIMENT,
            RubricDimension::Formality => FORMALITY,
            RubricDimension::Directness => DIRECTNESS,
            RubricDimension::Relationship => RELATIONSHIP,
            RubricDimension::Participation => PARTICIPATION,
        };
        format!("{PRAGMATIC_PREAMBLE}\n\n{block}")
    }

    /// Rubric plus a request for a single rating of this dimension.
    pub fn prompt(self, transcript_view: &str) -> PromptRequest {
        let (lo, hi) = self.scale();
        PromptRequest::judge(format!(
            "{}\n\nRate only {} for the input below. Reply with a single integer from {lo} to {hi}.\n\nInput:\n{transcript_view}",
            self.rubric(),
            self.name()
        ))
    }
}

impl fmt::Display for RubricDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name().to_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RubricScore<T> {
    pub dimension: RubricDimension,
    pub value: T,
    pub scale: (u32, u32),
    pub runs_averaged: usize,
}

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// First rating in a judge reply: a decimal number or a number word.
pub fn parse_rating(raw: &str) -> Option<f64> {
    for token in raw.split(|c: char| c.is_whitespace() || matches!(c, ',' | ':' | ';' | '/' | '(' | ')' | '"' | '\'' | '*')) {
        let t = token.trim_end_matches(['.', '!', '?']);
        if t.is_empty() {
            continue;
        }
        if t.starts_with(|c: char| c.is_ascii_digit()) {
            if let Ok(v) = t.parse::<f64>() {
                return Some(v);
            }
        }
        let lower = t.to_lowercase();
        if let Some(v) = NUMBER_WORDS.iter().position(|w| *w == lower) {
            return Some(v as f64);
        }
    }
    None
}

/// Runs the judge `runs` times and averages the ratings that parse and fall
/// inside the scale. A non-numeric reply gets one retry before the run is
/// skipped.
pub fn score_rubric<T: Real>(
    dimension: RubricDimension,
    transcript_view: &str,
    runs: usize,
    gateway: &Gateway,
) -> Result<RubricScore<T>, AnalyticsError> {
    if runs == 0 {
        return Err(AnalyticsError::NoRuns);
    }
    let req = dimension.prompt(transcript_view);
    let (lo, hi) = dimension.scale();
    let mut kept: Vec<f64> = Vec::new();
    for run in 0..runs {
        let mut rating = None;
        for _ in 0..2 {
            match gateway.complete(&req, &[]) {
                Ok(r) => {
                    rating = parse_rating(r.text());
                    if rating.is_some() {
                        break;
                    }
                    log::warn!("{dimension} run {run}: non-numeric reply {:?}", r.raw_text);
                }
                Err(e) => {
                    log::warn!("{dimension} run {run} failed: {e}");
                    break;
                }
            }
        }
        match rating {
            Some(v) if v >= lo as f64 && v <= hi as f64 => kept.push(v),
            Some(v) => log::warn!("{dimension} run {run}: rating {v} outside {lo}..={hi}"),
            None => {}
        }
    }
    if kept.is_empty() {
        return Err(AnalyticsError::NoScore);
    }
    let sum = kept.iter().fold(T::zero(), |acc, v| acc + real::<T>(*v));
    Ok(RubricScore {
        dimension,
        value: sum / count(kept.len()),
        scale: (lo, hi),
        runs_averaged: kept.len(),
    })
}
