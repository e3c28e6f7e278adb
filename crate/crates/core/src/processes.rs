//! Counting-process recipes and their simulated sample paths.
//!
//! A [`SamplePath`] stores the event times `t_0 < t_1 < ...` up to and
//! including the first event beyond the horizon, so `N(t)` and `R(t)` are
//! defined for every `t` in `[0, horizon]`. Non-delayed paths have an event
//! at time zero and therefore `N(0) = 1`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::lifetimes::{LifetimeDistribution, LifetimeError, PROBABILITY_SUM_TOL};

/// Default per-path event cap.
pub const DEFAULT_MAX_EVENTS: usize = 100_000_000;

/// Bisection tolerance for equilibrium inversion, relative to `max(1, x)`.
pub const EQUILIBRIUM_INVERSION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("horizon must be finite and > 0, got {0}")]
    InvalidHorizon(f64),
    #[error("path exceeded the cap of {cap} events before reaching horizon {horizon}")]
    EventCapExceeded { cap: usize, horizon: f64 },
    #[error("time {t} is outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("invalid process spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Lifetime(#[from] LifetimeError),
}

/// Law of the initial delay `T_0` of a delayed renewal process.
#[derive(Debug, Clone, PartialEq)]
pub enum Delay {
    Distribution(LifetimeDistribution),
    /// The equilibrium (stationary excess) law of the lifetime, which makes
    /// the process time-stationary.
    Equilibrium,
}

impl Serialize for Delay {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Delay::Distribution(d) => d.serialize(serializer),
            Delay::Equilibrium => serializer.serialize_str("equilibrium"),
        }
    }
}

impl<'de> Deserialize<'de> for Delay {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        match value {
            serde_json::Value::String(s) if s == "equilibrium" => Ok(Delay::Equilibrium),
            serde_json::Value::String(s) => Err(D::Error::custom(format!(
                "unknown delay `{s}`, expected \"equilibrium\" or a lifetime object"
            ))),
            other => LifetimeDistribution::deserialize(other)
                .map(Delay::Distribution)
                .map_err(D::Error::custom),
        }
    }
}

/// Initial state of a modulating chain: a named state or a probability
/// vector over the declared states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    State(String),
    Distribution(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Plain {
        lifetime: LifetimeDistribution,
    },
    Delayed {
        delay: Delay,
        lifetime: LifetimeDistribution,
    },
    /// Inter-arrival `T_n` drawn from `lifetimes[J(t_{n-1})]`, with `J`
    /// advancing by `kernel` at every event.
    Modulated {
        states: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<InitialState>,
        kernel: Vec<Vec<f64>>,
        lifetimes: BTreeMap<String, LifetimeDistribution>,
    },
    /// `T_n = (U_n + ... + U_{n+m-1}) / m` with `U_i` i.i.d. from `base`.
    #[serde(rename = "stationary_ma")]
    StationaryMa {
        m: usize,
        base: LifetimeDistribution,
    },
}

/// A modulated spec resolved to state indices.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedModulation<'a> {
    pub lifetimes: Vec<&'a LifetimeDistribution>,
    pub kernel: &'a [Vec<f64>],
    pub initial: Vec<f64>,
}

fn check_probabilities(what: &str, p: &[f64]) -> Result<(), ProcessError> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(ProcessError::InvalidSpec(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(ProcessError::InvalidSpec(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

impl ProcessSpec {
    pub fn plain(lifetime: LifetimeDistribution) -> Self {
        ProcessSpec::Plain { lifetime }
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        match self {
            ProcessSpec::Plain { .. } | ProcessSpec::Delayed { .. } => Ok(()),
            ProcessSpec::Modulated { .. } => self.resolve_modulation().map(|_| ()),
            ProcessSpec::StationaryMa { m, .. } => {
                if *m == 0 {
                    Err(ProcessError::InvalidSpec("stationary_ma needs m >= 1".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub(crate) fn resolve_modulation(&self) -> Result<ResolvedModulation<'_>, ProcessError> {
        let ProcessSpec::Modulated { states, initial, kernel, lifetimes } = self else {
            return Err(ProcessError::InvalidSpec("not a modulated spec".into()));
        };
        let k = states.len();
        if k == 0 {
            return Err(ProcessError::InvalidSpec("modulated spec has no states".into()));
        }
        for (i, s) in states.iter().enumerate() {
            if states[..i].contains(s) {
                return Err(ProcessError::InvalidSpec(format!("state `{s}` is declared twice")));
            }
        }
        if kernel.len() != k || kernel.iter().any(|row| row.len() != k) {
            return Err(ProcessError::InvalidSpec(format!("kernel must be {k}x{k}")));
        }
        for (i, row) in kernel.iter().enumerate() {
            check_probabilities(&format!("kernel row {i}"), row)?;
        }
        if let Some(extra) = lifetimes.keys().find(|name| !states.contains(name)) {
            return Err(ProcessError::InvalidSpec(format!("lifetime given for undeclared state `{extra}`")));
        }
        let resolved: Vec<&LifetimeDistribution> = states
            .iter()
            .map(|s| {
                lifetimes
                    .get(s)
                    .ok_or_else(|| ProcessError::InvalidSpec(format!("no lifetime for state `{s}`")))
            })
            .collect::<Result<_, _>>()?;
        let initial = match initial {
            None => vec![1.0 / k as f64; k],
            Some(InitialState::State(name)) => {
                let idx = states
                    .iter()
                    .position(|s| s == name)
                    .ok_or_else(|| ProcessError::InvalidSpec(format!("unknown initial state `{name}`")))?;
                let mut p = vec![0.0; k];
                p[idx] = 1.0;
                p
            }
            Some(InitialState::Distribution(p)) => {
                if p.len() != k {
                    return Err(ProcessError::InvalidSpec(format!(
                        "initial distribution has {} entries for {k} states",
                        p.len()
                    )));
                }
                check_probabilities("initial distribution", p)?;
                p.clone()
            }
        };
        Ok(ResolvedModulation { lifetimes: resolved, kernel, initial })
    }

    pub fn is_delayed(&self) -> bool {
        matches!(self, ProcessSpec::Delayed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub max_events: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { max_events: DEFAULT_MAX_EVENTS }
    }
}

/// Event times of one realisation on `[0, horizon]` plus one overshoot.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    horizon: f64,
    delayed: bool,
    events: Vec<f64>,
    states: Option<Vec<usize>>,
    ma_draws: Option<Vec<f64>>,
}

impl SamplePath {
    /// Builds a path from explicit event times. `events[0]` is `t_0`; it must
    /// be 0 for a non-delayed path and positive for a delayed one.
    pub fn from_events(events: Vec<f64>, horizon: f64, delayed: bool) -> Result<Self, ProcessError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ProcessError::InvalidHorizon(horizon));
        }
        let first = *events
            .first()
            .ok_or_else(|| ProcessError::InvalidSpec("path has no events".into()))?;
        if delayed && first <= 0.0 {
            return Err(ProcessError::InvalidSpec("delayed path needs t_0 > 0".into()));
        }
        if !delayed && first != 0.0 {
            return Err(ProcessError::InvalidSpec("non-delayed path needs t_0 = 0".into()));
        }
        if events.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ProcessError::InvalidSpec("event times must be strictly increasing".into()));
        }
        if !(events[events.len() - 1] > horizon) {
            return Err(ProcessError::InvalidSpec("last event must exceed the horizon".into()));
        }
        Ok(Self { horizon, delayed, events, states: None, ma_draws: None })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_delayed(&self) -> bool {
        self.delayed
    }

    /// All stored event times `t_0, t_1, ...`.
    pub fn events(&self) -> &[f64] {
        &self.events
    }

    /// Modulating state `J(t_n)` at each stored event, if modulated.
    pub fn states(&self) -> Option<&[usize]> {
        self.states.as_deref()
    }

    /// Base draws `U_1, U_2, ...` of a moving-average path (pre-roll first).
    pub fn ma_draws(&self) -> Option<&[f64]> {
        self.ma_draws.as_deref()
    }

    /// `T_n = t_n - t_{n-1}` for `n >= 1`; `T_0 = t_0` for delayed paths.
    pub fn inter_arrival(&self, n: usize) -> f64 {
        if n == 0 {
            self.events[0]
        } else {
            self.events[n] - self.events[n - 1]
        }
    }

    /// `S_n`, the time of event `n` (equal to `t_n`).
    pub fn partial_sum(&self, n: usize) -> f64 {
        self.events[n]
    }

    fn check_time(&self, t: f64) -> Result<(), ProcessError> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(ProcessError::TimeOutOfRange { t, horizon: self.horizon })
        }
    }

    /// `N(t) = #{n >= 0 : t_n <= t}`.
    pub fn count(&self, t: f64) -> Result<usize, ProcessError> {
        self.check_time(t)?;
        Ok(self.count_unchecked(t))
    }

    pub(crate) fn count_unchecked(&self, t: f64) -> usize {
        self.events.partition_point(|&e| e <= t)
    }

    /// `R(t) = t_{N(t)} - t`, the time to the next event strictly after `t`.
    pub fn residual(&self, t: f64) -> Result<f64, ProcessError> {
        self.check_time(t)?;
        Ok(self.events[self.count_unchecked(t)] - t)
    }

    /// Writes one JSON object per stored event.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Line {
            index: usize,
            time: f64,
            inter_arrival: Option<f64>,
            state: Option<usize>,
        }
        for (index, &time) in self.events.iter().enumerate() {
            let inter_arrival = if index == 0 && !self.delayed { None } else { Some(self.inter_arrival(index)) };
            let line = Line { index, time, inter_arrival, state: self.states.as_ref().map(|s| s[index]) };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Simulates one path with a generator seeded from `seed`.
pub fn simulate_path(spec: &ProcessSpec, horizon: f64, seed: u64) -> Result<SamplePath, ProcessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_path_with(spec, horizon, &mut rng, &SimulationOptions::default())
}

pub fn simulate_path_with<R: Rng + ?Sized>(
    spec: &ProcessSpec,
    horizon: f64,
    rng: &mut R,
    options: &SimulationOptions,
) -> Result<SamplePath, ProcessError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ProcessError::InvalidHorizon(horizon));
    }
    let cap = options.max_events;
    let mut events = Vec::new();
    let push = |events: &mut Vec<f64>, t: f64| -> Result<(), ProcessError> {
        if events.len() >= cap {
            return Err(ProcessError::EventCapExceeded { cap, horizon });
        }
        events.push(t);
        Ok(())
    };
    let mut states = None;
    let mut ma_draws = None;
    match spec {
        ProcessSpec::Plain { lifetime } => {
            let mut t = 0.0;
            push(&mut events, t)?;
            while t <= horizon {
                t += lifetime.sample(rng);
                push(&mut events, t)?;
            }
        }
        ProcessSpec::Delayed { delay, lifetime } => {
            let mut t = match delay {
                Delay::Distribution(d) => d.sample(rng),
                Delay::Equilibrium => equilibrium_delay_sample(lifetime, rng),
            };
            push(&mut events, t)?;
            while t <= horizon {
                t += lifetime.sample(rng);
                push(&mut events, t)?;
            }
        }
        ProcessSpec::Modulated { .. } => {
            let plan = spec.resolve_modulation()?;
            let mut j = pick(&plan.initial, rng);
            let mut visited = vec![j];
            let mut t = 0.0;
            push(&mut events, t)?;
            while t <= horizon {
                t += plan.lifetimes[j].sample(rng);
                push(&mut events, t)?;
                j = pick(&plan.kernel[j], rng);
                visited.push(j);
            }
            states = Some(visited);
        }
        ProcessSpec::StationaryMa { m, base } => {
            spec.validate()?;
            let m = *m;
            let mut draws: Vec<f64> = (0..m - 1).map(|_| base.sample(rng)).collect();
            let mut t = 0.0;
            push(&mut events, t)?;
            while t <= horizon {
                draws.push(base.sample(rng));
                let window = &draws[draws.len() - m..];
                t += window.iter().sum::<f64>() / m as f64;
                push(&mut events, t)?;
            }
            ma_draws = Some(draws);
        }
    }
    Ok(SamplePath { horizon, delayed: spec.is_delayed(), events, states, ma_draws })
}

fn pick<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}

/// Quantile of the equilibrium law of `lifetime` by bisection.
pub fn equilibrium_quantile(lifetime: &LifetimeDistribution, p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let mut lo = 0.0;
    let mut hi = lifetime.mean().max(f64::MIN_POSITIVE);
    while lifetime.equilibrium_cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return lo;
        }
    }
    while hi - lo > EQUILIBRIUM_INVERSION_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if lifetime.equilibrium_cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// A draw from the equilibrium law of `lifetime`, used as the delay of a
/// time-stationary renewal process.
pub fn equilibrium_delay_sample<R: Rng + ?Sized>(lifetime: &LifetimeDistribution, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    equilibrium_quantile(lifetime, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(a: f64) -> LifetimeDistribution {
        LifetimeDistribution::deterministic(a).unwrap()
    }

    #[test]
    fn deterministic_grid_with_overshoot() {
        let p = simulate_path(&ProcessSpec::plain(det(1.0)), 3.5, 1).unwrap();
        assert_eq!(p.events(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.count(3.5).unwrap(), 4);
        assert_eq!(p.count(0.0).unwrap(), 1);
        assert_eq!(p.residual(0.25).unwrap(), 0.75);
        assert_eq!(p.residual(1.0).unwrap(), 1.0);
    }

    #[test]
    fn delayed_shift() {
        let spec = ProcessSpec::Delayed { delay: Delay::Distribution(det(0.5)), lifetime: det(1.0) };
        let p = simulate_path(&spec, 2.0, 1).unwrap();
        assert_eq!(p.events(), &[0.5, 1.5, 2.5]);
        assert_eq!(p.count(0.25).unwrap(), 0);
        assert_eq!(p.residual(0.25).unwrap(), 0.25);
    }

    #[test]
    fn out_of_range_and_bad_horizon() {
        let p = simulate_path(&ProcessSpec::plain(det(1.0)), 2.0, 0).unwrap();
        assert!(matches!(p.count(2.5), Err(ProcessError::TimeOutOfRange { .. })));
        assert!(matches!(p.residual(-0.1), Err(ProcessError::TimeOutOfRange { .. })));
        assert!(matches!(
            simulate_path(&ProcessSpec::plain(det(1.0)), 0.0, 0),
            Err(ProcessError::InvalidHorizon(_))
        ));
    }

    #[test]
    fn event_cap_is_an_error() {
        let spec = ProcessSpec::plain(det(1e-3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = simulate_path_with(&spec, 10.0, &mut rng, &SimulationOptions { max_events: 100 });
        assert!(matches!(r, Err(ProcessError::EventCapExceeded { cap: 100, .. })));
    }

    #[test]
    fn residual_identity_holds_exactly() {
        let spec = ProcessSpec::plain(LifetimeDistribution::gamma(2.0, 2.0).unwrap());
        let p = simulate_path(&spec, 30.0, 11).unwrap();
        for i in 0..=300 {
            let t = i as f64 * 0.1;
            let n = p.count(t).unwrap();
            assert_eq!(t + p.residual(t).unwrap() - t, p.partial_sum(n) - t);
        }
    }

    #[test]
    fn modulated_validation() {
        let json = r#"{"kind":"modulated","states":["a","b"],"kernel":[[0,1],[1,0.9]],
            "lifetimes":{"a":{"kind":"exponential","rate":1},"b":{"kind":"exponential","rate":1}}}"#;
        let spec: ProcessSpec = serde_json::from_str(json).unwrap();
        assert!(matches!(spec.validate(), Err(ProcessError::InvalidSpec(_))));
        let json = r#"{"kind":"modulated","states":["a","b"],"kernel":[[0,1],[1,0]],
            "lifetimes":{"a":{"kind":"exponential","rate":1}}}"#;
        let spec: ProcessSpec = serde_json::from_str(json).unwrap();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn modulated_alternates_states() {
        let json = r#"{"kind":"modulated","states":["a","b"],"initial":"a","kernel":[[0,1],[1,0]],
            "lifetimes":{"a":{"kind":"deterministic","a":1},"b":{"kind":"deterministic","a":3}}}"#;
        let spec: ProcessSpec = serde_json::from_str(json).unwrap();
        let p = simulate_path(&spec, 9.0, 3).unwrap();
        assert_eq!(p.events(), &[0.0, 1.0, 4.0, 5.0, 8.0, 9.0, 12.0]);
        assert_eq!(&p.states().unwrap()[..4], &[0, 1, 0, 1]);
    }

    #[test]
    fn moving_average_uses_preroll() {
        let spec = ProcessSpec::StationaryMa { m: 3, base: LifetimeDistribution::exponential(1.0).unwrap() };
        let p = simulate_path(&spec, 5.0, 8).unwrap();
        let u = p.ma_draws().unwrap();
        assert_eq!(u.len(), p.events().len() - 1 + 2);
        let t1 = (u[0] + u[1] + u[2]) / 3.0;
        assert!((p.inter_arrival(1) - t1).abs() < 1e-15);
    }

    #[test]
    fn delay_json_forms() {
        let s: ProcessSpec = serde_json::from_str(
            r#"{"kind":"delayed","delay":"equilibrium","lifetime":{"kind":"exponential","rate":1}}"#,
        )
        .unwrap();
        assert!(matches!(s, ProcessSpec::Delayed { delay: Delay::Equilibrium, .. }));
        assert!(serde_json::from_str::<ProcessSpec>(
            r#"{"kind":"delayed","delay":"stationary","lifetime":{"kind":"exponential","rate":1}}"#
        )
        .is_err());
        let round = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ProcessSpec>(&round).unwrap(), s);
    }

    #[test]
    fn equilibrium_quantile_at_zero_is_tiny_positive() {
        let d = LifetimeDistribution::exponential(1.0).unwrap();
        let q0 = equilibrium_quantile(&d, 0.0);
        assert!(q0 > 0.0 && q0 <= 1e-9);
        assert_eq!(q0, equilibrium_quantile(&d, 0.0));
        let q = equilibrium_quantile(&d, 0.5);
        assert!((q - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn ndjson_lines() {
        let p = simulate_path(&ProcessSpec::plain(det(1.0)), 1.5, 0).unwrap();
        let mut buf = Vec::new();
        p.write_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], r#"{"index":0,"time":0.0,"inter_arrival":null,"state":null}"#);
        assert_eq!(lines[2], r#"{"index":2,"time":2.0,"inter_arrival":1.0,"state":null}"#);
    }
}
