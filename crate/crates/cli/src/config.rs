//! Experiment configuration: one JSON document per run.

use std::fmt;
use std::path::{Path, PathBuf};

use renewkit::asymptotics::MIN_BLACKWELL_REPS;
use renewkit::renewal_solver::{default_step, Generator};
use renewkit::ProcessSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RENEWKIT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "renewkit-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}", schema_message(path, message))]
    Schema { path: String, message: String },
    #[error("field `{field}` is required for experiment `{kind}`")]
    Missing { field: &'static str, kind: ExperimentKind },
    #[error("field `{field}` must be positive and finite, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("field `reps` must be at least {min} for experiment `{kind}`, got {reps}")]
    TooFewReps { kind: ExperimentKind, min: usize, reps: usize },
    #[error("field `spec`: {0}")]
    Spec(String),
    #[error("experiment `{kind}` needs a {expected} spec")]
    WrongSpecKind { kind: ExperimentKind, expected: &'static str },
    #[error("{0}")]
    Unsupported(String),
}

fn schema_message(path: &str, message: &str) -> String {
    if path == "." {
        message.to_string()
    } else {
        format!("at `{path}`: {message}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Decompose,
    Blackwell,
    Rate,
    ResidualLaw,
    Variance,
    RmCross,
    RenewalSolve,
    Sgibnev,
    Modulated,
    Palm,
    Diffusion,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Decompose => "decompose",
            Self::Blackwell => "blackwell",
            Self::Rate => "rate",
            Self::ResidualLaw => "residual-law",
            Self::Variance => "variance",
            Self::RmCross => "rm-cross",
            Self::RenewalSolve => "renewal-solve",
            Self::Sgibnev => "sgibnev",
            Self::Modulated => "modulated",
            Self::Palm => "palm",
            Self::Diffusion => "diffusion",
        }
    }

    /// Knobs that must be present for this kind.
    fn required(self) -> &'static [&'static str] {
        match self {
            Self::Simulate => &["horizon"],
            Self::Decompose => &["t"],
            Self::Blackwell | Self::Modulated | Self::Palm => &["t", "h", "reps"],
            Self::Rate | Self::ResidualLaw | Self::Variance | Self::RmCross => &["t", "reps"],
            Self::RenewalSolve => &["horizon", "generator"],
            Self::Sgibnev => &["t"],
            Self::Diffusion => &["n", "t", "reps"],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Generator of the renewal equation for `renewal-solve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorName {
    One,
    Zero,
    ResidualMean,
    ResidualSecond,
}

impl From<GeneratorName> for Generator {
    fn from(g: GeneratorName) -> Self {
        match g {
            GeneratorName::One => Generator::One,
            GeneratorName::Zero => Generator::Zero,
            GeneratorName::ResidualMean => Generator::ResidualMean,
            GeneratorName::ResidualSecond => Generator::ResidualSecond,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub spec: ProcessSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorName>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
}

/// Command-line values that replace top-level knobs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Parses a config, reporting schema errors with their JSON path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| ConfigError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    de.end().map_err(|e| ConfigError::Schema { path: ".".into(), message: e.to_string() })?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

fn positive(field: &'static str, value: Option<f64>) -> Result<(), ConfigError> {
    match value {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(ConfigError::NotPositive { field, value: x }),
        _ => Ok(()),
    }
}

fn positive_count(field: &'static str, value: Option<usize>) -> Result<(), ConfigError> {
    match value {
        Some(0) => Err(ConfigError::NotPositive { field, value: 0.0 }),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(reps) = o.reps {
            self.reps = Some(reps);
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(threads) = o.threads {
            self.threads = Some(threads);
        }
    }

    fn has(&self, field: &str) -> bool {
        match field {
            "t" => self.t.is_some(),
            "h" => self.h.is_some(),
            "n" => self.n.is_some(),
            "reps" => self.reps.is_some(),
            "horizon" => self.horizon.is_some(),
            "generator" => self.generator.is_some(),
            _ => unreachable!("unknown knob {field}"),
        }
    }

    /// Checks the knobs and the process spec against the chosen experiment.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let kind = self.experiment;
        for field in kind.required() {
            if !self.has(field) {
                return Err(ConfigError::Missing { field, kind });
            }
        }
        positive("t", self.t)?;
        positive("h", self.h)?;
        positive("v", self.v)?;
        positive("n", self.n)?;
        positive("step", self.step)?;
        positive("horizon", self.horizon)?;
        positive_count("reps", self.reps)?;
        positive_count("threads", self.threads)?;
        positive_count("max_events", self.max_events)?;
        if matches!(kind, ExperimentKind::Blackwell | ExperimentKind::Modulated | ExperimentKind::Palm) {
            let reps = self.reps.unwrap_or(0);
            if reps < MIN_BLACKWELL_REPS {
                return Err(ConfigError::TooFewReps { kind, min: MIN_BLACKWELL_REPS, reps });
            }
        }
        self.spec.validate().map_err(|e| ConfigError::Spec(e.to_string()))?;
        let expected = match kind {
            ExperimentKind::Variance
            | ExperimentKind::RmCross
            | ExperimentKind::RenewalSolve
            | ExperimentKind::Sgibnev
            | ExperimentKind::Diffusion => Some(("plain", matches!(self.spec, ProcessSpec::Plain { .. }))),
            ExperimentKind::ResidualLaw => {
                Some(("plain or delayed", matches!(self.spec, ProcessSpec::Plain { .. } | ProcessSpec::Delayed { .. })))
            }
            ExperimentKind::Modulated => Some(("modulated", matches!(self.spec, ProcessSpec::Modulated { .. }))),
            ExperimentKind::Palm => Some(("stationary_ma", matches!(self.spec, ProcessSpec::StationaryMa { .. }))),
            _ => None,
        };
        if let Some((expected, false)) = expected {
            return Err(ConfigError::WrongSpecKind { kind, expected });
        }
        Ok(())
    }

    /// The config with every default filled in, as the runner will use it.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut c = self.clone();
        let out = c
            .out
            .take()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        c.out = Some(out);
        c.threads = c.threads.or_else(|| std::thread::available_parallelism().map(|n| n.get()).ok()).or(Some(1));
        if matches!(c.experiment, ExperimentKind::Simulate | ExperimentKind::Decompose) {
            c.reps = c.reps.or(Some(1));
        }
        match c.experiment {
            ExperimentKind::RenewalSolve => c.step = c.step.or(c.horizon.map(default_step)),
            ExperimentKind::Sgibnev => c.step = c.step.or(c.t.map(default_step)),
            _ => {}
        }
        c
    }
}
