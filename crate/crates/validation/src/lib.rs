//! Shared fixtures and reporting for the acceptance battery.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use renewkit::{LifetimeDistribution, ProcessSpec};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    /// Combines sub-checks; passes only if all of them pass.
    pub fn all(parts: Vec<Verdict>) -> Self {
        let pass = parts.iter().all(|v| v.pass);
        let detail = parts
            .iter()
            .map(|v| format!("[{}] {}", if v.pass { "ok" } else { "fail" }, v.detail))
            .collect::<Vec<_>>()
            .join("; ");
        Self { pass, detail }
    }
}

/// Runs `check`, turning panics into failures, and prints one line.
pub fn run_criterion(label: &str, name: &str, check: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".to_string());
        Verdict::new(false, format!("panicked: {msg}"))
    });
    println!(
        "{} {label} {name} ({:.1}s): {}",
        if verdict.pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        verdict.detail
    );
    verdict.pass
}

pub fn exponential(rate: f64) -> LifetimeDistribution {
    LifetimeDistribution::exponential(rate).expect("valid rate")
}

pub fn gamma22() -> LifetimeDistribution {
    LifetimeDistribution::gamma(2.0, 2.0).expect("valid gamma")
}

/// Two states visited alternately, exponential holding means 1 and 3.
pub fn alternating_modulated() -> ProcessSpec {
    serde_json::from_str(
        r#"{"kind":"modulated","states":["fast","slow"],"initial":"fast",
            "kernel":[[0.0,1.0],[1.0,0.0]],
            "lifetimes":{"fast":{"kind":"exponential","rate":1.0},
                         "slow":{"kind":"gamma","shape":1.0,"rate":0.3333333333333333}}}"#,
    )
    .expect("valid modulated spec")
}

/// One spec of each kind, with its long-run rate.
pub fn battery() -> Vec<(&'static str, ProcessSpec, f64)> {
    vec![
        ("plain gamma(2,2)", ProcessSpec::plain(gamma22()), 1.0),
        (
            "delayed equilibrium uniform(0,2)",
            ProcessSpec::Delayed {
                delay: renewkit::Delay::Equilibrium,
                lifetime: LifetimeDistribution::uniform(0.0, 2.0).expect("valid uniform"),
            },
            1.0,
        ),
        ("modulated alternating", alternating_modulated(), 0.5),
        ("moving average m=2", ProcessSpec::StationaryMa { m: 2, base: exponential(1.0) }, 1.0),
    ]
}
