//! Acceptance gate: every primary criterion at its stated tolerance and
//! time budget, one PASS/FAIL line each.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::criteria::{self, Check};

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { name: "golden prompts", budget: secs(1), run: criteria::golden_prompts },
        Criterion { name: "compression invariants", budget: secs(10), run: || criteria::compression_invariants(1000) },
        Criterion { name: "turn-selection distribution", budget: secs(5), run: criteria::turn_distribution },
        Criterion { name: "scenario fixture", budget: secs(5), run: criteria::scenario_fixture },
        Criterion { name: "wilcoxon oracle", budget: secs(30), run: criteria::wilcoxon_oracle },
        Criterion { name: "metrics arithmetic", budget: secs(1), run: criteria::metrics_arithmetic },
        Criterion { name: "highlight validity", budget: secs(5), run: || criteria::highlight_validity(5000) },
        Criterion { name: "topic plausibility back-computation", budget: None, run: criteria::fig5_plausibility },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if took > b => Err(format!("took {took:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:<38} {detail} ({took:.2?})", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<38} {why} ({took:.2?})", c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
