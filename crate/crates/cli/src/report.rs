//! Verdict lines and CSV artifacts.

use std::fmt::Write as _;
use std::io::{self, Write};

use renewkit::asymptotics::Estimate;
use renewkit::ProcessSpec;
use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of the process spec's canonical JSON.
pub fn spec_hash(spec: &ProcessSpec) -> String {
    let json = serde_json::to_string(spec).expect("specs serialize");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).fold(String::with_capacity(16), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// `{:.16e}` for present values, empty otherwise.
pub fn num(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Reported quantity without a pass/fail target.
    Note,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Note => "NOTE",
        }
    }

    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// One check of an experiment: a summary row and a verdict line.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub target: Option<f64>,
    pub z: Option<f64>,
    pub detail: String,
}

impl Check {
    /// Passes when `target` lies within `k` standard errors.
    pub fn within_se(name: &str, e: &Estimate, target: f64, k: f64) -> Self {
        let z = e.z_score(target);
        let mut detail = format!("estimate {:.6} ± {:.6} vs target {target} (z = {z:.3})", e.estimate, e.std_error);
        for flag in &e.flags {
            detail.push_str("; ");
            detail.push_str(flag);
        }
        Check {
            name: name.into(),
            status: Status::from_bool(z.abs() <= k),
            estimate: Some(e.estimate),
            se: Some(e.std_error),
            target: Some(target),
            z: Some(z),
            detail,
        }
    }

    pub fn line(&self, experiment: &str) -> String {
        format!("{} {experiment}/{}: {}", self.status.label(), self.name, self.detail)
    }
}

/// Identifies the run on every summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub experiment: String,
    pub spec_hash: String,
    pub seed: u64,
    pub reps: Option<usize>,
    pub t: Option<f64>,
    pub h: Option<f64>,
    pub v: Option<f64>,
    pub n: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "experiment,check,spec_hash,seed,reps,t,h,v,n,estimate,se,target,z,status";

pub fn write_summary<W: Write>(key: &RunKey, checks: &[Check], mut w: W) -> io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for c in checks {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            key.experiment,
            c.name,
            key.spec_hash,
            key.seed,
            key.reps.map(|r| r.to_string()).unwrap_or_default(),
            num(key.t),
            num(key.h),
            num(key.v),
            num(key.n),
            num(c.estimate),
            num(c.se),
            num(c.target),
            num(c.z),
            c.status.label(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use renewkit::LifetimeDistribution;

    #[test]
    fn hash_is_stable_and_distinguishes_specs() {
        let a = ProcessSpec::plain(LifetimeDistribution::exponential(1.0).unwrap());
        let b = ProcessSpec::plain(LifetimeDistribution::exponential(2.0).unwrap());
        assert_eq!(spec_hash(&a), spec_hash(&a.clone()));
        assert_eq!(spec_hash(&a).len(), 16);
        assert_ne!(spec_hash(&a), spec_hash(&b));
    }

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(num(Some(0.1)), "1.0000000000000001e-1");
        assert_eq!(num(None), "");
    }

    #[test]
    fn summary_rows_match_header() {
        let key = RunKey {
            experiment: "rate".into(),
            spec_hash: "00".into(),
            seed: 1,
            reps: Some(10),
            t: Some(2.0),
            h: None,
            v: None,
            n: None,
        };
        let c = Check {
            name: "rate".into(),
            status: Status::Pass,
            estimate: Some(1.0),
            se: Some(0.1),
            target: Some(1.0),
            z: Some(0.0),
            detail: String::new(),
        };
        let mut buf = Vec::new();
        write_summary(&key, &[c], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cols = SUMMARY_HEADER.split(',').count();
        assert!(text.lines().all(|l| l.split(',').count() == cols));
    }
}
