//! One check per acceptance criterion. Each returns a short detail line on
//! success and the reason on failure.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use colleagues::analytics::{
    interaction_metrics, topic_metrics, wilcoxon_signed_rank, MainTopic, PValueMethod, PairedSample, TopicAnnotation,
};
use colleagues::compactor::{token_count, HistorySegment};
use colleagues::enrichment::{extract_highlights, MAX_PHRASES, MAX_PHRASE_WORDS};
use colleagues::gateway::FnProvider;
use colleagues::prompt::{render, PromptKind};
use colleagues::session::{Message, SessionState, Speaker, ThinkingMode};
use colleagues::{Catalog, CompactionPolicy, Compactor, EngineSettings, Gateway, ProviderProfile};

use super::*;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn golden_prompts() -> Check {
    for kind in PromptKind::ALL {
        let req = render(kind, &golden_bindings(kind)).map_err(|e| format!("{}: {e}", kind.name()))?;
        check_golden(&crate_dir().join("tests/golden").join(format!("{}.txt", kind.name())), &req.text)?;
    }
    Ok(format!("{} templates bit-identical", PromptKind::ALL.len()))
}

const WORDS: [&str; 16] = [
    "idea", "shared", "canvas", "remote", "team", "async", "voice", "map", "signal", "sketch", "board", "agent",
    "cluster", "notes", "latency", "trust",
];

pub fn random_text(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    let mut s = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ");
    s.push('.');
    s
}

pub fn random_transcript(rng: &mut ChaCha8Rng, len: usize) -> Vec<Message> {
    let personas = ["ux_designer", "market_analyst", "data_scientist", "software_engineer"];
    let t0 = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    (0..len)
        .map(|i| {
            let speaker = match rng.gen_range(0..4) {
                0 => Speaker::User,
                1 => Speaker::Facilitator,
                _ => Speaker::Persona(personas.choose(rng).unwrap().to_string()),
            };
            Message {
                seq: i as u64 + 1,
                speaker,
                text: random_text(rng, 30),
                mode: if rng.gen_bool(0.5) { ThinkingMode::Explore } else { ThinkingMode::Focus },
                timestamp: t0 + Duration::seconds(i as i64),
                highlights: Vec::new(),
            }
        })
        .collect()
}

/// Mock summarizer whose reply length (1 to 400 tokens) depends only on
/// the request text, so some replies overshoot the cap.
pub fn hashing_summarizer() -> Gateway {
    let provider = FnProvider(|req: &colleagues::PromptRequest| {
        let mut h = DefaultHasher::new();
        req.text.hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let n = rng.gen_range(1..=400);
        Ok((0..n).map(|_| *WORDS.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" "))
    });
    Gateway::new(Arc::new(provider), ProviderProfile::offline())
}

/// Checks every compaction invariant for one transcript.
pub fn compaction_invariants(compactor: &Compactor, transcript: &[Message]) -> Result<(), String> {
    let policy = compactor.policy;
    let out = compactor.compact(transcript);
    let n = transcript.len();
    if n < policy.threshold {
        ensure(out.older_block.is_empty() && out.recent == transcript, || format!("len {n}: compacted below threshold"))?;
        return Ok(());
    }
    let split = n - policy.recent_window;
    ensure(out.recent == transcript[split..], || format!("len {n}: recent window not verbatim"))?;
    let mut covered = Vec::new();
    let mut anchors_seen = Vec::new();
    for seg in &out.older_block {
        match seg {
            HistorySegment::Verbatim { message } => {
                covered.push(message.seq);
                if message.speaker.is_anchor() {
                    anchors_seen.push(message.clone());
                }
            }
            HistorySegment::Summary { text, covered_seqs } => {
                ensure(token_count(text) <= policy.summary_token_cap, || {
                    format!("len {n}: summary of {} tokens", token_count(text))
                })?;
                for seq in covered_seqs {
                    let m = &transcript[*seq as usize - 1];
                    ensure(!m.speaker.is_anchor(), || format!("len {n}: anchor {seq} summarized"))?;
                }
                covered.extend(covered_seqs);
            }
        }
    }
    let older_seqs: Vec<u64> = transcript[..split].iter().map(|m| m.seq).collect();
    ensure(covered == older_seqs, || format!("len {n}: older block does not cover each message once in order"))?;
    let anchors: Vec<Message> = transcript[..split].iter().filter(|m| m.speaker.is_anchor()).cloned().collect();
    ensure(anchors_seen == anchors, || format!("len {n}: user or facilitator turn altered"))?;
    ensure(!out.degraded, || format!("len {n}: unexpected degraded compaction"))
}

pub fn compression_invariants(samples: usize) -> Check {
    let catalog = Catalog::builtin();
    let gateway = hashing_summarizer();
    let compactor = Compactor::new(CompactionPolicy::default(), &gateway, &catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut compacted = 0;
    for _ in 0..samples {
        let len = rng.gen_range(1..=60);
        let t = random_transcript(&mut rng, len);
        compaction_invariants(&compactor, &t)?;
        compacted += usize::from(len >= 15);
    }
    Ok(format!("{samples} transcripts, {compacted} compacted"))
}

pub const DRAWS: usize = 10_000;

/// Runs the engine's speaker selection repeatedly against a fixed ranking
/// and returns the chosen ids.
pub fn selection_sequence(seed: u64, draws: usize) -> Result<Vec<String>, String> {
    let provider = FnProvider(|_: &colleagues::PromptRequest| {
        Ok(r#"["Market Analyst", "Data Scientist", "Software Engineer"]"#.to_string())
    });
    let engine = engine_over(Arc::new(provider), EngineSettings::default(), 0);
    let (mut s, _) = engine
        .create_session("draws", "p", &roster(&["ux_designer", "market_analyst", "data_scientist", "software_engineer"]), seed)
        .map_err(|e| e.to_string())?;
    s.state.last_speaker = Some("ux_designer".into());
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let sel = engine.select_next_speaker(&s, "UX Designer: hi").map_err(|e| e.to_string())?;
        s.state.rng_word_pos = sel.rng_word_pos;
        out.push(sel.choice.chosen);
    }
    Ok(out)
}

pub fn turn_distribution() -> Check {
    let a = selection_sequence(2024, DRAWS)?;
    let b = selection_sequence(2024, DRAWS)?;
    ensure(a == b, || "two runs with one seed diverged".into())?;
    let freq = |id: &str| a.iter().filter(|c| *c == id).count() as f64 / DRAWS as f64;
    let (top, alt1, alt2) = (freq("market_analyst"), freq("data_scientist"), freq("software_engineer"));
    ensure((0.78..=0.82).contains(&top), || format!("top frequency {top}"))?;
    ensure((0.08..=0.12).contains(&alt1) && (0.08..=0.12).contains(&alt2), || {
        format!("alternate frequencies {alt1} {alt2}")
    })?;
    Ok(format!("top {top:.4}, alternates {alt1:.4} / {alt2:.4}, deterministic"))
}

pub fn scenario_fixture() -> Check {
    let (run, mock) = run_scenario();
    let catalog = Catalog::builtin();
    let mut text = render_transcript(&catalog, &run.session.state.transcript);
    let summary = run
        .outcomes
        .iter()
        .find_map(|o| match o {
            colleagues::ActionOutcome::Summary { summary } => Some(summary.clone()),
            _ => None,
        })
        .ok_or("no summary outcome")?;
    text.push_str(&format!("summary: {summary}\n"));
    check_golden(&fixture("scenario_transcript.txt"), &text)?;
    check_golden(&fixture("scenario_events.jsonl"), &render_events(&run.session.events))?;
    ensure(mock.remaining() == 0, || format!("{} scripted replies unused", mock.remaining()))?;
    let replayed = SessionState::replay(&run.session.events).map_err(|e| e.to_string())?;
    ensure(replayed == run.session.state, || "replayed state differs".into())?;
    Ok(format!(
        "{} messages, {} events, replay identical",
        run.session.state.transcript.len(),
        run.session.events.len()
    ))
}

/// Tie-free paired sample: distinct, well-separated absolute differences.
pub fn tie_free_sample(rng: &mut ChaCha8Rng, n: usize) -> PairedSample<f64> {
    let mut mags: Vec<u32> = (1..=4 * n as u32).collect();
    mags.shuffle(rng);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for &m in &mags[..n] {
        let base = rng.gen_range(1.0..5.0);
        let d = m as f64 * 0.25 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        a.push(base + d);
        b.push(base);
    }
    PairedSample::new(a, b).expect("equal lengths")
}

/// Two-sided exact p by enumerating all 2^n sign assignments.
pub fn brute_force_p(abs_diffs: &[f64], w: f64) -> f64 {
    let n = abs_diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| abs_diffs[i].partial_cmp(&abs_diffs[j]).unwrap());
    let mut ranks = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r as f64 + 1.0;
    }
    let total = 1u64 << n;
    let mut hits = 0u64;
    for mask in 0..total {
        let t: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if t <= w + 1e-9 {
            hits += 1;
        }
    }
    (2.0 * hits as f64 / total as f64).min(1.0)
}

pub fn wilcoxon_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157);
    let mut worst = 0.0f64;
    for n in 3..=9 {
        for _ in 0..200 {
            let s = tie_free_sample(&mut rng, n);
            let r = wilcoxon_signed_rank(&s).map_err(|e| e.to_string())?;
            ensure(r.method == PValueMethod::Exact, || format!("n={n}: exact method not used"))?;
            let diffs: Vec<f64> = s.condition_a.iter().zip(&s.condition_b).map(|(a, b)| (a - b).abs()).collect();
            let brute = brute_force_p(&diffs, r.w);
            worst = worst.max((r.p - brute).abs());
            ensure((r.p - brute).abs() <= 1e-12, || format!("n={n}: p {} vs enumeration {brute}", r.p))?;
        }
    }
    for i in 0..1000 {
        let n = rng.gen_range(3..=30);
        let s = tie_free_sample(&mut rng, n);
        let base = wilcoxon_signed_rank(&s).map_err(|e| e.to_string())?;
        let c = rng.gen_range(0.01..100.0);
        let scaled = PairedSample::new(
            s.condition_a.iter().map(|x| x * c).collect(),
            s.condition_b.iter().map(|x| x * c).collect(),
        )
        .unwrap();
        let sc = wilcoxon_signed_rank(&scaled).map_err(|e| e.to_string())?;
        ensure(sc.w == base.w && (sc.p - base.p).abs() <= 1e-12, || format!("sample {i}: not scale invariant"))?;
        let sw = wilcoxon_signed_rank(&s.swapped()).map_err(|e| e.to_string())?;
        ensure(
            sw.w == base.w && sw.w_plus == base.w_minus && sw.w_minus == base.w_plus && (sw.p - base.p).abs() <= 1e-12,
            || format!("sample {i}: not swap symmetric"),
        )?;
    }
    Ok(format!("1400 exact p values within {worst:.1e}, 1000 invariance samples"))
}

pub fn metrics_arithmetic() -> Check {
    // 8 user utterances totalling 80 words, interleaved with persona turns
    let t0 = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let mut transcript = Vec::new();
    for i in 0..8u64 {
        let words = if i % 2 == 0 { 7 } else { 13 };
        let text = vec!["word"; words].join(" ");
        transcript.push(Message {
            seq: 2 * i + 1,
            speaker: Speaker::User,
            text,
            mode: ThinkingMode::Explore,
            timestamp: t0,
            highlights: vec![],
        });
        transcript.push(Message {
            seq: 2 * i + 2,
            speaker: Speaker::Persona("ux_designer".into()),
            text: "persona words do not count here".into(),
            mode: ThinkingMode::Explore,
            timestamp: t0,
            highlights: vec![],
        });
    }
    let m = interaction_metrics(&transcript, 10.0).map_err(|e| e.to_string())?;
    ensure(m.user_utterances == 8 && m.total_user_words == 80, || format!("counted {m:?}"))?;
    ensure(m.utterances_per_minute == 0.8 && m.user_words_per_minute == 8.0, || format!("rates {m:?}"))?;

    let sub = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let ann = TopicAnnotation::from_topics(vec![
        MainTopic { label: "Shared canvas".into(), sub_topics: sub(&["live cursors", "sticky notes", "voice"]) },
        MainTopic { label: "Async handoff".into(), sub_topics: sub(&["summaries", "timezones", "agents"]) },
    ]);
    let t = topic_metrics(&ann, 6.0).map_err(|e| e.to_string())?;
    ensure(t.branching_ratio == 3.0 && t.sub_topics_per_minute == 1.0, || format!("topic metrics {t:?}"))?;
    Ok("0.8 utt/min, 8.0 words/min, branching 3.0, 1.0 sub/min".into())
}

/// A judge reply mixing valid spans, near misses and junk.
fn fuzz_reply(rng: &mut ChaCha8Rng, text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut phrases = Vec::new();
    for _ in 0..rng.gen_range(0..6) {
        let p = match rng.gen_range(0..7) {
            0 | 1 => {
                let len = rng.gen_range(1..=7).min(words.len());
                let start = rng.gen_range(0..=words.len() - len);
                words[start..start + len].join(" ")
            }
            2 => random_text(rng, 3).trim_end_matches('.').to_string(),
            3 => words.choose(rng).unwrap().to_uppercase(),
            4 => format!("  {} ", words.choose(rng).unwrap()),
            5 => String::new(),
            _ => text.to_string(),
        };
        phrases.push(p);
    }
    match rng.gen_range(0..10) {
        0 => "Sorry, I cannot help with that.".into(),
        1 => format!("```json\n{}\n```", serde_json::to_string(&phrases).unwrap()),
        2 => format!("{:?}", phrases).replace('"', "'"),
        _ => serde_json::to_string(&phrases).unwrap(),
    }
}

pub fn highlight_validity(rounds: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4849);
    let t0 = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let mut kept = 0;
    for i in 0..rounds {
        let text = random_text(&mut rng, 25);
        let reply = fuzz_reply(&mut rng, &text);
        let provider = FnProvider(move |_: &colleagues::PromptRequest| Ok(reply.clone()));
        let gateway = Gateway::new(Arc::new(provider), ProviderProfile::offline());
        let message = Message {
            seq: 5,
            speaker: Speaker::Persona("ux_designer".into()),
            text: text.clone(),
            mode: ThinkingMode::Explore,
            timestamp: t0,
            highlights: vec![],
        };
        let set = extract_highlights(&message, "Team discussion", &gateway).map_err(|e| format!("round {i}: {e}"))?;
        ensure(set.phrases.len() <= MAX_PHRASES, || format!("round {i}: {} phrases", set.phrases.len()))?;
        for p in &set.phrases {
            ensure(text.contains(p.as_str()), || format!("round {i}: {p:?} not in {text:?}"))?;
            let n = p.split_whitespace().count();
            ensure((1..=MAX_PHRASE_WORDS).contains(&n), || format!("round {i}: {p:?} has {n} words"))?;
        }
        ensure(set.is_valid_for(&message), || format!("round {i}: set rejected"))?;
        kept += set.phrases.len();
    }
    Ok(format!("{rounds} fuzzed replies, {kept} phrases kept, none invalid"))
}

pub const FIG5_MAIN_PER_MIN: f64 = 0.36;
pub const FIG5_SUB_PER_MIN: f64 = 1.25;
pub const FIG5_MINUTES: f64 = 12.9;
pub const FIG5_BRANCHING: f64 = 3.72;

pub fn fig5_plausibility() -> Check {
    let ann = TopicAnnotation::from_counts(FIG5_MAIN_PER_MIN * FIG5_MINUTES, FIG5_SUB_PER_MIN * FIG5_MINUTES);
    let t = topic_metrics(&ann, FIG5_MINUTES).map_err(|e| e.to_string())?;
    // independent back-computation: the minutes cancel out
    let expected = FIG5_SUB_PER_MIN / FIG5_MAIN_PER_MIN;
    ensure((t.branching_ratio - expected).abs() < 1e-12, || format!("branching {} vs {expected}", t.branching_ratio))?;
    let gap = (t.branching_ratio - FIG5_BRANCHING).abs();
    ensure(gap <= 0.3, || format!("branching {:.3} is {gap:.3} from {FIG5_BRANCHING}", t.branching_ratio))?;
    Ok(format!("branching {:.3}, {gap:.3} from {FIG5_BRANCHING}", t.branching_ratio))
}
