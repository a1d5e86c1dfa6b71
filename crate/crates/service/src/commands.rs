//! Offline verbs: headless runs, replay, metrics reports and comparisons.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use colleagues::analytics::{
    annotate_topics, interaction_metrics, score_rubric, topic_metrics, transcript_duration_minutes,
    wilcoxon_signed_rank, PairedSample, RubricDimension,
};
use colleagues::compactor::{speaker_name, transcript_view};
use colleagues::error::AnalyticsError;
use colleagues::headless::{run_script, HeadlessScript};
use colleagues::store::{event_line, read_log_file};
use colleagues::{
    Catalog, ChatProvider, EngineConfig, Gateway, InteractionMetrics, ProviderProfile, RubricScore, ScriptedMock,
    Session, SessionState, SimulatedProvider, TopicMetrics,
};

/// Where model replies come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProviderChoice {
    /// The script's canned replies.
    Mock,
    /// Offline, seeded stand-in replies.
    Simulated,
    /// The configured OpenAI-compatible endpoint.
    Live,
}

pub fn build_provider(
    choice: ProviderChoice,
    cfg: &EngineConfig,
    catalog: &Catalog,
    seed: u64,
) -> Result<(Arc<dyn ChatProvider>, ProviderProfile)> {
    Ok(match choice {
        ProviderChoice::Mock => bail!("the mock provider needs a script"),
        ProviderChoice::Simulated => {
            let names = catalog.iter().map(|p| p.display_name.clone()).collect();
            (Arc::new(SimulatedProvider::new(seed, names)), ProviderProfile::offline())
        }
        ProviderChoice::Live => {
            (Arc::new(crate::provider::OpenAiProvider::from_env(&cfg.provider)?), cfg.provider.clone())
        }
    })
}

pub fn write_log(path: &Path, session: &Session) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    for ev in &session.events {
        writeln!(f, "{}", event_line(ev))?;
    }
    f.sync_all()?;
    Ok(())
}

/// Runs a script and writes its event log. A failing action still leaves
/// the log of everything before it, then reports the error.
pub fn run_headless(
    script_path: &Path,
    out: Option<&Path>,
    choice: Option<ProviderChoice>,
    cfg: &EngineConfig,
) -> Result<PathBuf> {
    let script: HeadlessScript = serde_json::from_str(
        &fs::read_to_string(script_path).with_context(|| format!("reading {}", script_path.display()))?,
    )
    .with_context(|| format!("parsing {}", script_path.display()))?;
    let catalog = Arc::new(Catalog::builtin());
    let choice = choice.unwrap_or(if script.mock.is_empty() { ProviderChoice::Simulated } else { ProviderChoice::Mock });
    let (provider, profile): (Arc<dyn ChatProvider>, _) = match choice {
        ProviderChoice::Mock => {
            if script.mock.is_empty() {
                bail!("script has no mock replies");
            }
            (Arc::new(ScriptedMock::new(script.mock.clone(), script.seed)), ProviderProfile::offline())
        }
        other => build_provider(other, cfg, &catalog, script.seed)?,
    };
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.data_dir.join(format!("{}.jsonl", script.session_id)));
    match run_script(&script, catalog, provider, profile, cfg.engine.clone()) {
        Ok(run) => {
            write_log(&out, &run.session)?;
            Ok(out)
        }
        Err((e, partial)) => {
            if let Some(s) = partial {
                write_log(&out, &s)?;
                bail!("script stopped: {e} (partial log in {})", out.display());
            }
            bail!("script stopped: {e}");
        }
    }
}

pub fn load_session(path: &Path) -> Result<Session> {
    let events = read_log_file(path).with_context(|| format!("reading {}", path.display()))?;
    Session::from_events(events).with_context(|| format!("replaying {}", path.display()))
}

/// The reconstructed transcript, one message per line.
pub fn replay_text(catalog: &Catalog, state: &SessionState) -> String {
    let mut out = format!("phase: {}  mode: {}\n", state.phase, state.mode);
    for m in &state.transcript {
        out.push_str(&format!("{:>3} [{}] {}: {}\n", m.seq, m.mode, speaker_name(catalog, &m.speaker), m.text));
        if !m.highlights.is_empty() {
            out.push_str(&format!("      highlights: {}\n", m.highlights.join(" | ")));
        }
    }
    out
}

/// One line of a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub session_id: String,
    pub duration_minutes: f64,
    pub interaction: InteractionMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<TopicMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rubric: Vec<RubricScore>,
}

impl MetricsRecord {
    /// Numeric fields by name, for comparisons.
    pub fn field(&self, name: &str) -> Option<f64> {
        let i = &self.interaction;
        let t = self.topics.as_ref();
        Some(match name {
            "duration_minutes" => self.duration_minutes,
            "user_utterances" => i.user_utterances as f64,
            "total_user_words" => i.total_user_words as f64,
            "utterances_per_minute" => i.utterances_per_minute,
            "user_words_per_minute" => i.user_words_per_minute,
            "avg_words_per_message" => i.avg_words_per_message,
            "topics_per_minute" => t?.topics_per_minute,
            "sub_topics_per_minute" => t?.sub_topics_per_minute,
            "branching_ratio" => t?.branching_ratio,
            "time_per_main_topic" => t?.time_per_main_topic,
            other => self.rubric.iter().find(|r| r.dimension.name().eq_ignore_ascii_case(other))?.value,
        })
    }
}

pub const COMPARED_FIELDS: [&str; 5] = [
    "utterances_per_minute",
    "user_words_per_minute",
    "avg_words_per_message",
    "sub_topics_per_minute",
    "branching_ratio",
];

/// Judge settings for the optional topic and rubric passes.
pub struct Judge<'a> {
    pub gateway: &'a Gateway,
    pub runs: usize,
}

pub fn metrics_record(catalog: &Catalog, session: &Session, judge: Option<&Judge>) -> Result<MetricsRecord> {
    let state = &session.state;
    let minutes: f64 = transcript_duration_minutes(&state.transcript).unwrap_or(0.0);
    let interaction = interaction_metrics(&state.transcript, minutes)
        .with_context(|| format!("session {}", session.id()))?;
    let mut record = MetricsRecord {
        session_id: session.id().to_string(),
        duration_minutes: minutes,
        interaction,
        topics: None,
        rubric: Vec::new(),
    };
    if let Some(j) = judge {
        let view = transcript_view(catalog, &state.transcript);
        match annotate_topics(&view, j.runs, j.gateway).and_then(|a| topic_metrics(&a, minutes)) {
            Ok(t) => record.topics = Some(t),
            Err(e) => log::warn!("session {}: topics skipped: {e}", session.id()),
        }
        for dim in RubricDimension::ALL {
            match score_rubric(dim, &view, j.runs, j.gateway) {
                Ok(s) => record.rubric.push(s),
                Err(e) => log::warn!("session {}: {} skipped: {e}", session.id(), dim.name()),
            }
        }
    }
    Ok(record)
}

pub fn read_report(path: &Path) -> Result<Vec<MetricsRecord>> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

/// Paired Wilcoxon tests, record i of `a` against record i of `b`.
pub fn compare_reports(a: &[MetricsRecord], b: &[MetricsRecord], fields: &[&str]) -> Result<String> {
    if a.len() != b.len() {
        bail!("reports differ in length: {} vs {}", a.len(), b.len());
    }
    let mut out = format!("{} pairs\n", a.len());
    for &field in fields {
        let xs: Option<Vec<f64>> = a.iter().map(|r| r.field(field)).collect();
        let ys: Option<Vec<f64>> = b.iter().map(|r| r.field(field)).collect();
        let (Some(xs), Some(ys)) = (xs, ys) else {
            out.push_str(&format!("{field}: not present in every record\n"));
            continue;
        };
        let labels = a.iter().zip(b).map(|(x, y)| format!("{}~{}", x.session_id, y.session_id)).collect();
        let sample = PairedSample::labelled(labels, xs, ys)?;
        match wilcoxon_signed_rank(&sample) {
            Ok(r) => out.push_str(&format!(
                "{field}: W={} n={} p={:.4} r={:.3} ({:?})\n",
                r.w, r.n, r.p, r.effect_size_r, r.method
            )),
            Err(AnalyticsError::AllZeroDifferences) => {
                out.push_str(&format!("{field}: all differences zero, no evidence of a difference (p = 1.0)\n"))
            }
            Err(e) => out.push_str(&format!("{field}: {e}\n")),
        }
    }
    Ok(out)
}
