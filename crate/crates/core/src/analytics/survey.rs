//! Questionnaire ingestion. Answers are 7-point agreement ratings
//! (1 = strongly disagree, 7 = strongly agree).

use serde::{Deserialize, Serialize};

use super::wilcoxon::PairedSample;
use super::{count, Real};
use crate::error::AnalyticsError;

pub const CREATIVITY_ITEMS: [&str; 11] = [
    "I often come up with new and practical ideas to improve performance.",
    "I search for new technologies, techniques, or solutions.",
    "I suggest new ways to increase the quality of work or outcomes.",
    "I am a good source of creative ideas.",
    "I come up with creative solutions to problems.",
    "I often have a fresh approach to challenges.",
    "I am willing to take risks in generating new ideas.",
    "I promote and support ideas that I believe in.",
    "I create detailed plans for implementing new ideas.",
    "I exhibit creativity when given the opportunity.",
    "I consider myself a creative person.",
];

pub const POST_SYSTEM_ITEMS: [&str; 12] = [
    "The system encouraged creative thinking and helped me explore a wide range of ideas.",
    "I was able to guide the idea generation based on my needs during the task.",
    "This system benefits/enriches my ideation process and thinking.",
    "I reached lots of valuable or actionable ideas that felt better than what I might have generated alone.",
    "Working with the AI system allows me to develop more creative solutions that I would not have come up with on my own.",
    "Interacting with the system felt like working with a helpful teammate.",
    "The system offered useful perspectives that expanded or deepened my thinking.",
    "When working with this AI system, everyone (human/AI) can contribute their strengths and complement each other in the best possible way.",
    "I was able to shift between exploring new ideas and focusing on specific ones as needed.",
    "The session kept me mentally engaged and the interaction felt smooth and well-paced.",
    "I would use a system like this again for brainstorming or planning in the future.",
    "Did the system make you feel more in control of the creative process (rather than more guided by the AI)?",
];

/// One participant's post-system questionnaire for one condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant: String,
    pub condition: String,
    pub answers: [u8; 12],
}

impl SurveyResponse {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        match self.answers.iter().position(|a| !(1..=7).contains(a)) {
            Some(i) => Err(AnalyticsError::AnswerOutOfScale { item: i + 1, value: self.answers[i] }),
            None => Ok(()),
        }
    }

    /// Mean over 1-based item numbers, e.g. a merged construct.
    pub fn construct_mean<T: Real>(&self, items: &[usize]) -> T {
        let sum: usize = items.iter().map(|i| self.answers[i - 1] as usize).sum();
        count::<T>(sum) / count(items.len())
    }
}

/// Pairs the construct means of two conditions by participant.
/// Participants missing either condition are left out.
pub fn paired_construct<T: Real>(
    responses: &[SurveyResponse],
    items: &[usize],
    condition_a: &str,
    condition_b: &str,
) -> Result<PairedSample<T>, AnalyticsError> {
    for r in responses {
        r.validate()?;
    }
    let mut labels = Vec::new();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for ra in responses.iter().filter(|r| r.condition == condition_a) {
        if let Some(rb) = responses
            .iter()
            .find(|r| r.condition == condition_b && r.participant == ra.participant)
        {
            labels.push(ra.participant.clone());
            a.push(ra.construct_mean(items));
            b.push(rb.construct_mean(items));
        }
    }
    PairedSample::labelled(labels, a, b)
}
