#![allow(dead_code)]

pub mod criteria;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use colleagues::compactor::speaker_name;
use colleagues::gateway::{ChatProvider, ProviderProfile, ScriptEntry, ScriptedMock};
use colleagues::headless::{run_script, HeadlessRun, HeadlessScript};
use colleagues::prompt::{Bindings, PromptKind};
use colleagues::session::{Message, SessionEvent, SteppingClock};
use colleagues::store::event_line;
use colleagues::{Catalog, Engine, EngineSettings, Gateway, Session};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    crate_dir().join("tests/fixtures").join(name)
}

/// Compares against a pinned file; `UPDATE_GOLDEN=1` rewrites it instead.
pub fn check_golden(path: &Path, actual: &str) -> Result<(), String> {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .map_or_else(|| "length differs".to_string(), |i| format!("first difference at line {}", i + 1));
    Err(format!("{} drifted: {line}", path.display()))
}

/// The fixed binding set used for golden prompt files.
pub fn golden_bindings(kind: PromptKind) -> Bindings {
    let raw: serde_json::Map<String, serde_json::Value> = serde_json::from_str(
        &std::fs::read_to_string(crate_dir().join("tests/golden/bindings.json")).unwrap(),
    )
    .unwrap();
    let mut b = Bindings::new();
    for name in kind.placeholders() {
        let v = raw[name].as_str().unwrap();
        let value = match v.strip_prefix('@') {
            Some(file) => std::fs::read_to_string(crate_dir().join(file)).unwrap(),
            None => v.to_string(),
        };
        b.set(name, value);
    }
    b
}

pub fn load_scenario() -> HeadlessScript {
    serde_json::from_str(&std::fs::read_to_string(fixture("scenario.json")).unwrap()).unwrap()
}

pub fn run_scenario() -> (HeadlessRun, Arc<ScriptedMock>) {
    let script = load_scenario();
    let mock = Arc::new(ScriptedMock::new(script.mock.clone(), script.seed));
    let run = run_script(
        &script,
        Arc::new(Catalog::builtin()),
        mock.clone(),
        ProviderProfile::offline(),
        EngineSettings::default(),
    )
    .map_err(|(e, _)| e)
    .expect("scenario runs to completion");
    (run, mock)
}

/// Human-readable transcript, one message per line.
pub fn render_transcript(catalog: &Catalog, transcript: &[Message]) -> String {
    let mut out = String::new();
    for m in transcript {
        out.push_str(&format!(
            "{:>2} [{}] {}: {}",
            m.seq,
            m.mode,
            speaker_name(catalog, &m.speaker),
            m.text
        ));
        if !m.highlights.is_empty() {
            out.push_str(&format!("  <<{}>>", m.highlights.join(" | ")));
        }
        out.push('\n');
    }
    out
}

pub fn render_events(events: &[SessionEvent]) -> String {
    events.iter().map(|e| event_line(e) + "\n").collect()
}

pub fn mock_engine(entries: Vec<ScriptEntry>) -> (Engine, Arc<ScriptedMock>) {
    mock_engine_with(entries, EngineSettings::default(), 0)
}

pub fn mock_engine_with(entries: Vec<ScriptEntry>, settings: EngineSettings, retries: u32) -> (Engine, Arc<ScriptedMock>) {
    let mock = Arc::new(ScriptedMock::new(entries, 0));
    let engine = engine_over(mock.clone(), settings, retries);
    (engine, mock)
}

pub fn engine_over(provider: Arc<dyn ChatProvider>, settings: EngineSettings, retries: u32) -> Engine {
    let profile = ProviderProfile { max_retries: retries, ..ProviderProfile::offline() };
    Engine::new(
        Arc::new(Catalog::builtin()),
        Gateway::new(provider, profile),
        settings,
        Arc::new(SteppingClock::fixture()),
    )
}

pub fn roster(ids: &[&str]) -> Vec<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

/// A created and started three-person session: UX Designer opens.
pub fn started(extra: Vec<ScriptEntry>) -> (Engine, Arc<ScriptedMock>, Session) {
    let mut entries = vec![
        ScriptEntry::free("Make it feel like a game night."),
        ScriptEntry::free("Start with a duet mode."),
        ScriptEntry::free("Check who actually sings."),
        ScriptEntry::name("UX Designer"),
    ];
    entries.extend(extra);
    let (engine, mock) = mock_engine(entries);
    let (mut s, _) = engine
        .create_session(
            "t",
            "karaoke in AVs",
            &roster(&["ux_designer", "software_engineer", "user_researcher"]),
            17,
        )
        .unwrap();
    engine.start(&mut s).unwrap();
    (engine, mock, s)
}
