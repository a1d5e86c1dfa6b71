use serde::{Deserialize, Serialize};

use super::{count, Real};
use crate::error::AnalyticsError;
use crate::session::{Message, Speaker};

/// User-side activity rates for one session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionMetrics<T> {
    pub user_utterances: usize,
    pub total_user_words: usize,
    pub utterances_per_minute: T,
    pub user_words_per_minute: T,
    pub avg_words_per_message: T,
    /// Minutes.
    pub session_duration: T,
}

/// Counts user messages only. Words are whitespace tokens.
pub fn interaction_metrics<T: Real>(
    transcript: &[Message],
    duration_minutes: T,
) -> Result<InteractionMetrics<T>, AnalyticsError> {
    if !(duration_minutes > T::zero()) {
        return Err(AnalyticsError::ZeroDuration);
    }
    let user: Vec<&Message> = transcript.iter().filter(|m| m.speaker == Speaker::User).collect();
    let words: usize = user.iter().map(|m| m.text.split_whitespace().count()).sum();
    let utterances = user.len();
    let avg = if utterances == 0 {
        T::zero()
    } else {
        count::<T>(words) / count(utterances)
    };
    Ok(InteractionMetrics {
        user_utterances: utterances,
        total_user_words: words,
        utterances_per_minute: count::<T>(utterances) / duration_minutes,
        user_words_per_minute: count::<T>(words) / duration_minutes,
        avg_words_per_message: avg,
        session_duration: duration_minutes,
    })
}

/// Wall-clock span from the first to the last message, in minutes.
pub fn transcript_duration_minutes<T: Real>(transcript: &[Message]) -> Option<T> {
    let (first, last) = (transcript.first()?, transcript.last()?);
    let ms = (last.timestamp - first.timestamp).num_milliseconds();
    T::from_i64(ms).map(|ms| ms / T::from_f64(60_000.0).expect("constant"))
}
