//! Conversation analytics: interaction rates, topic structure, judge-scored
//! rubrics and the paired Wilcoxon signed-rank test.
//!
//! The numeric code is generic over [`Real`]; the crate root exposes `f64`
//! aliases for everyday use.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod metrics;
pub mod rubric;
pub mod survey;
pub mod topics;
pub mod wilcoxon;

pub use metrics::{interaction_metrics, transcript_duration_minutes, InteractionMetrics};
pub use rubric::{parse_rating, score_rubric, RubricDimension, RubricScore};
pub use survey::{SurveyResponse, CREATIVITY_ITEMS, POST_SYSTEM_ITEMS};
pub use topics::{annotate_topics, parse_topic_table, topic_metrics, MainTopic, TopicAnnotation, TopicMetrics};
pub use wilcoxon::{wilcoxon_signed_rank, PairedSample, PValueMethod, WilcoxonResult};

/// Scalar used by the analytics math.
pub trait Real: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {}

pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 converts into every Real")
}

pub(crate) fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("counts convert into every Real")
}
