use serde::{Deserialize, Serialize};

use super::{count, Real};
use crate::error::AnalyticsError;
use crate::gateway::Gateway;
use crate::prompt::PromptRequest;

pub const TOPIC_EXTRACTION: &str = include_str!("../../judge/topic_extraction.txt");

/// Default number of judge runs averaged per transcript.
pub const DEFAULT_RUNS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainTopic {
    pub label: String,
    pub sub_topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAnnotation<T> {
    /// Labels from the first successful run, kept for inspection.
    pub main_topics: Vec<MainTopic>,
    pub annotation_runs: usize,
    pub mean_main_topics: T,
    pub mean_sub_topics: T,
}

impl<T: Real> TopicAnnotation<T> {
    /// A single hand-made annotation.
    pub fn from_topics(main_topics: Vec<MainTopic>) -> Self {
        let subs: usize = main_topics.iter().map(|m| m.sub_topics.len()).sum();
        Self {
            mean_main_topics: count(main_topics.len()),
            mean_sub_topics: count(subs),
            main_topics,
            annotation_runs: 1,
        }
    }

    /// Counts without labels, e.g. averages reported elsewhere.
    pub fn from_counts(mean_main_topics: T, mean_sub_topics: T) -> Self {
        Self {
            main_topics: Vec::new(),
            annotation_runs: 1,
            mean_main_topics,
            mean_sub_topics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicMetrics<T> {
    pub topics_per_minute: T,
    pub sub_topics_per_minute: T,
    pub branching_ratio: T,
    /// Minutes per main topic.
    pub time_per_main_topic: T,
    /// Minutes per sub-topic; infinite when there are none.
    pub time_per_sub_topic: T,
}

pub fn topic_metrics<T: Real>(
    annotation: &TopicAnnotation<T>,
    duration_minutes: T,
) -> Result<TopicMetrics<T>, AnalyticsError> {
    if !(duration_minutes > T::zero()) {
        return Err(AnalyticsError::ZeroDuration);
    }
    let (main, sub) = (annotation.mean_main_topics, annotation.mean_sub_topics);
    if !(main > T::zero()) {
        return Err(AnalyticsError::ZeroTopics);
    }
    Ok(TopicMetrics {
        topics_per_minute: main / duration_minutes,
        sub_topics_per_minute: sub / duration_minutes,
        branching_ratio: sub / main,
        time_per_main_topic: duration_minutes / main,
        time_per_sub_topic: if sub > T::zero() { duration_minutes / sub } else { T::infinity() },
    })
}

/// Judge prompt for one transcript.
pub fn topic_prompt(transcript_view: &str) -> PromptRequest {
    let head = TOPIC_EXTRACTION.replace("{{input_format}}", "The text after \"Conversation:\"");
    PromptRequest::judge(format!("{head}\n\nConversation:\n{transcript_view}"))
}

/// Runs the judge `runs` times and averages the counts.
/// Failed or unparseable runs are skipped.
pub fn annotate_topics<T: Real>(
    transcript_view: &str,
    runs: usize,
    gateway: &Gateway,
) -> Result<TopicAnnotation<T>, AnalyticsError> {
    if runs == 0 {
        return Err(AnalyticsError::NoRuns);
    }
    let reqs = vec![topic_prompt(transcript_view); runs];
    let mut good: Vec<Vec<MainTopic>> = Vec::new();
    for (i, res) in gateway.complete_batch(&reqs, &[]).into_iter().enumerate() {
        match res {
            Ok(r) => match parse_topic_table(r.text()) {
                Some(topics) => good.push(topics),
                None => log::warn!("topic run {i}: no topics in reply"),
            },
            Err(e) => log::warn!("topic run {i} failed: {e}"),
        }
    }
    let Some(first) = good.first().cloned() else {
        return Err(AnalyticsError::NoAnnotation);
    };
    let n: T = count(good.len());
    let mains: usize = good.iter().map(Vec::len).sum();
    let subs: usize = good.iter().flatten().map(|m| m.sub_topics.len()).sum();
    Ok(TopicAnnotation {
        main_topics: first,
        annotation_runs: good.len(),
        mean_main_topics: count::<T>(mains) / n,
        mean_sub_topics: count::<T>(subs) / n,
    })
}

/// Reads a judge reply as JSON, a markdown table, or a nested bullet list.
pub fn parse_topic_table(raw: &str) -> Option<Vec<MainTopic>> {
    let body = crate::gateway::unwrap_code_fence(raw);
    let topics = parse_json(body)
        .or_else(|| parse_markdown_table(body))
        .or_else(|| parse_bullets(body))?;
    (!topics.is_empty()).then_some(topics)
}

fn clean(label: &str) -> String {
    label.trim().trim_matches(|c| c == '*' || c == '_' || c == '`').trim().to_string()
}

fn split_subs(cell: &str) -> Vec<String> {
    cell.split([';', ',', '•'])
        .flat_map(|s| s.split("<br>"))
        .map(|s| clean(s.trim_start_matches(['-', '*'])))
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_json(body: &str) -> Option<Vec<MainTopic>> {
    let value: serde_json::Value = serde_json::from_str(body.trim()).ok()?;
    let subs_of = |v: &serde_json::Value| -> Vec<String> {
        v.as_array()
            .map(|a| a.iter().filter_map(|s| s.as_str()).map(clean).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    };
    match value {
        serde_json::Value::Array(items) => items
            .iter()
            .map(|item| {
                let obj = item.as_object()?;
                let label = obj
                    .iter()
                    .find(|(k, _)| k.to_lowercase().replace([' ', '-'], "_").starts_with("main"))
                    .and_then(|(_, v)| v.as_str())?;
                let subs = obj
                    .iter()
                    .find(|(k, _)| k.to_lowercase().replace([' ', '-'], "_").starts_with("sub"))
                    .map(|(_, v)| subs_of(v))
                    .unwrap_or_default();
                Some(MainTopic { label: clean(label), sub_topics: subs })
            })
            .collect(),
        serde_json::Value::Object(map) => Some(
            map.iter()
                .map(|(k, v)| MainTopic { label: clean(k), sub_topics: subs_of(v) })
                .collect(),
        ),
        _ => None,
    }
}

fn parse_markdown_table(body: &str) -> Option<Vec<MainTopic>> {
    let rows: Vec<Vec<String>> = body
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with('|'))
        .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
        .collect();
    if rows.len() < 2 {
        return None;
    }
    let mut out: Vec<MainTopic> = Vec::new();
    for row in rows.iter().skip(1) {
        if row.iter().all(|c| c.chars().all(|ch| matches!(ch, '-' | ':' | ' '))) {
            continue;
        }
        let main = row.first().map(|c| clean(c)).unwrap_or_default();
        let subs: Vec<String> = row.iter().skip(1).flat_map(|c| split_subs(c)).collect();
        if main.is_empty() {
            // continuation row for the previous main topic
            out.last_mut()?.sub_topics.extend(subs);
        } else {
            out.push(MainTopic { label: main, sub_topics: subs });
        }
    }
    Some(out)
}

fn bullet_body(line: &str) -> Option<&str> {
    let t = line.trim_start();
    if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")).or_else(|| t.strip_prefix("• ")) {
        return Some(rest);
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        return rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") "));
    }
    None
}

fn parse_bullets(body: &str) -> Option<Vec<MainTopic>> {
    let mut out: Vec<MainTopic> = Vec::new();
    let mut top_indent: Option<usize> = None;
    for line in body.lines() {
        let Some(item) = bullet_body(line) else { continue };
        let indent = line.len() - line.trim_start().len();
        let top = *top_indent.get_or_insert(indent);
        let label = clean(item.trim_end_matches(':'));
        if label.is_empty() {
            continue;
        }
        if indent <= top {
            out.push(MainTopic { label, sub_topics: Vec::new() });
        } else {
            out.last_mut()?.sub_topics.push(label);
        }
    }
    (!out.is_empty()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_with_list_cells() {
        let raw = "| Main Topic | Sub-topics |\n|---|---|\n| Remote work | async updates; time zones |\n| Tools | whiteboards, video |\n";
        let t = parse_topic_table(raw).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].sub_topics, ["async updates", "time zones"]);
        assert_eq!(t[1].sub_topics, ["whiteboards", "video"]);
    }

    #[test]
    fn table_with_continuation_rows() {
        let raw = "| Main | Sub |\n| --- | --- |\n| **A** | a1 |\n|  | a2 |\n| B | b1 |";
        let t = parse_topic_table(raw).unwrap();
        assert_eq!(t[0], MainTopic { label: "A".into(), sub_topics: vec!["a1".into(), "a2".into()] });
        assert_eq!(t[1].sub_topics, ["b1"]);
    }

    #[test]
    fn nested_bullets_and_json() {
        let raw = "1. Lighting:\n   - sync to songs\n   - mood presets\n2. Safety\n   - driver focus";
        let t = parse_topic_table(raw).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].label, "Lighting");
        assert_eq!(t[0].sub_topics.len(), 2);

        let json = r#"[{"main_topic": "A", "sub_topics": ["x", "y"]}, {"main_topic": "B", "sub_topics": []}]"#;
        let t = parse_topic_table(json).unwrap();
        assert_eq!((t.len(), t[0].sub_topics.len()), (2, 2));
        let obj = r#"{"A": ["x"], "B": ["y", "z"]}"#;
        assert_eq!(parse_topic_table(obj).unwrap()[1].sub_topics, ["y", "z"]);
    }

    #[test]
    fn prose_is_not_a_table() {
        assert_eq!(parse_topic_table("I could not find any topics."), None);
    }

    #[test]
    fn zero_duration_and_zero_topics() {
        let a = TopicAnnotation::<f64>::from_counts(2.0, 6.0);
        assert_eq!(topic_metrics(&a, 0.0), Err(AnalyticsError::ZeroDuration));
        let z = TopicAnnotation::<f64>::from_counts(0.0, 0.0);
        assert_eq!(topic_metrics(&z, 5.0), Err(AnalyticsError::ZeroTopics));
    }

    #[test]
    fn prompt_binds_input_format() {
        let req = topic_prompt("User: hi");
        assert!(!req.text.contains("{{"));
        assert!(req.text.ends_with("Conversation:\nUser: hi"));
    }
}
