//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Each check runs against its own wall-clock budget.
//!
//! Run with `cargo test -p mia-cli --test acceptance`.

mod attacks;
mod cli;
mod experiments;
mod metrics;
mod ngram;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

/// `Ok(detail)` on success, `Err(reason)` otherwise.
pub type Check = Result<String, String>;

/// Turns a condition into a check failure carrying `msg`.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

const CRITERIA: &[Criterion] = &[
    Criterion { name: "attack-formula-oracles", budget: secs(5), run: attacks::check },
    Criterion { name: "metric-analytics", budget: secs(10), run: metrics::check },
    Criterion { name: "ngram-oracle-equivalence", budget: secs(60), run: ngram::equivalence },
    Criterion { name: "decontamination-postconditions", budget: None, run: ngram::postconditions },
    Criterion { name: "epochs-direction", budget: secs(60), run: experiments::epochs },
    Criterion { name: "data-size-direction", budget: secs(180), run: experiments::data_size },
    Criterion { name: "overlap-filter-direction", budget: secs(60), run: experiments::overlap_filter },
    Criterion { name: "shift-direction", budget: secs(60), run: experiments::shift },
    Criterion { name: "edited-members-protocol", budget: secs(60), run: experiments::edited_members },
    Criterion { name: "cli-determinism", budget: None, run: cli::determinism },
];

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let budget = match c.budget {
            Some(b) => format!(" / {}s", b.as_secs()),
            None => String::new(),
        };
        let result = match (result, c.budget) {
            (Ok(d), Some(b)) if elapsed > b => Err(format!("over budget; {d}")),
            (r, _) => r,
        };
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {} ({:.2}s{budget}): {detail}", c.name, elapsed.as_secs_f64());
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
