use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use colleagues::gateway::ScriptEntry;
use colleagues::headless::HeadlessScript;
use colleagues::{Catalog, EngineConfig, Gateway, ProviderProfile, ScriptedMock};
use colleagues_service::commands::{self, Judge, ProviderChoice};

#[derive(Parser)]
#[command(name = "colleagues", version, about = "Multi-persona ideation sessions: server, headless runs and analysis")]
struct Cli {
    /// Flat key = value TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set facilitator_interval=4.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Start the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, value_enum, default_value = "live")]
        provider: ProviderChoice,
        /// Canned replies for `--provider mock`: a JSON list of entries or
        /// a headless script.
        #[arg(long)]
        mock_replies: Option<PathBuf>,
    },
    /// Drive a whole session from a script and write its event log.
    RunHeadless {
        script: PathBuf,
        /// Log path; defaults to <data_dir>/<session_id>.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        provider: Option<ProviderChoice>,
    },
    /// Print the transcript reconstructed from an event log.
    Replay { log: PathBuf },
    /// Write one metrics record per log as JSONL.
    Metrics {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run the topic and rubric judges through the live provider.
        #[arg(long)]
        judge: bool,
        #[arg(long, default_value_t = 3)]
        runs: usize,
    },
    /// Paired signed-rank tests between two metrics reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Fields to compare; defaults to the rate and topic fields.
        #[arg(long = "field")]
        fields: Vec<String>,
    },
    /// Print the effective configuration.
    PrintConfig,
}

fn load_config(cli: &Cli) -> Result<EngineConfig> {
    let flags = cli
        .overrides
        .iter()
        .map(|kv| match kv.split_once('=') {
            Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
            None => bail!("--set expects KEY=VALUE, got `{kv}`"),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EngineConfig::load(cli.config.as_deref(), std::env::vars(), &flags)?)
}

fn mock_entries(path: &PathBuf) -> Result<Vec<ScriptEntry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(entries) = serde_json::from_str::<Vec<ScriptEntry>>(&text) {
        return Ok(entries);
    }
    let script: HeadlessScript = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(script.mock)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.verb {
        Verb::Serve { bind, provider, mock_replies } => {
            let catalog = Catalog::builtin();
            let (p, profile) = match provider {
                ProviderChoice::Mock => {
                    let path = mock_replies.context("--provider mock needs --mock-replies")?;
                    let mock: Arc<dyn colleagues::ChatProvider> = Arc::new(ScriptedMock::new(mock_entries(&path)?, 0));
                    (mock, ProviderProfile::offline())
                }
                other => commands::build_provider(other, &cfg, &catalog, rand::random())?,
            };
            colleagues_service::serve(colleagues_service::app_state(&cfg, p, profile)?, bind)
        }
        Verb::RunHeadless { script, out, provider } => {
            let path = commands::run_headless(&script, out.as_deref(), provider, &cfg)?;
            println!("{}", path.display());
            Ok(())
        }
        Verb::Replay { log } => {
            let session = commands::load_session(&log)?;
            print!("{}", commands::replay_text(&Catalog::builtin(), &session.state));
            Ok(())
        }
        Verb::Metrics { logs, out, judge, runs } => {
            let catalog = Catalog::builtin();
            let gateway = if judge {
                let (p, profile) = commands::build_provider(ProviderChoice::Live, &cfg, &catalog, 0)?;
                Some(Gateway::new(p, profile))
            } else {
                None
            };
            let judge = gateway.as_ref().map(|gateway| Judge { gateway, runs });
            let mut lines = String::new();
            for log in &logs {
                let session = commands::load_session(log)?;
                let record = commands::metrics_record(&catalog, &session, judge.as_ref())?;
                lines.push_str(&serde_json::to_string(&record)?);
                lines.push('\n');
            }
            match out {
                Some(path) => std::fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{lines}"),
            }
            Ok(())
        }
        Verb::Compare { a, b, fields } => {
            let fields: Vec<&str> = if fields.is_empty() {
                commands::COMPARED_FIELDS.to_vec()
            } else {
                fields.iter().map(String::as_str).collect()
            };
            let report = commands::compare_reports(&commands::read_report(&a)?, &commands::read_report(&b)?, &fields)?;
            print!("{report}");
            Ok(())
        }
        Verb::PrintConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
