//! Parametric lifetime (inter-arrival) distributions.
//!
//! Every family is supported on `(0, ∞)` and has a finite mean. All
//! distributional quantities the rest of the crate needs are derived from
//! two primitives per family with closed forms:
//!
//! ```text
//! upper(j, t) = E[T^j 1(T > t)]     (may be infinite)
//! lower(j, t) = E[T^j 1(T <= t)]    (always finite for finite t)
//! ```
//!
//! for `j = 0..=3`. Tails, truncated means, stop-loss transforms and their
//! integrals are polynomial combinations of these.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Open01};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};
use thiserror::Error;

use crate::numeric::lattice_span;

/// Tolerance on probability vectors (mixture weights, lattice pmfs).
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifetimeError {
    #[error("{family}: parameter `{name}` = {value} is invalid ({reason})")]
    InvalidParameter {
        family: &'static str,
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{family}: {reason}")]
    InvalidProbabilities { family: &'static str, reason: String },
    #[error("moment of order {0} is not supported (expected 1, 2 or 3)")]
    UnsupportedMoment(u32),
}

/// A moment or partial moment that may diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn is_finite(self) -> bool {
        matches!(self, Moment::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Moment::Finite(x) => Some(x),
            Moment::Infinite => None,
        }
    }

    fn map(self, f: impl FnOnce(f64) -> f64) -> Moment {
        match self {
            Moment::Finite(x) => Moment::Finite(f(x)),
            Moment::Infinite => Moment::Infinite,
        }
    }
}

impl std::fmt::Display for Moment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Moment::Finite(x) => write!(f, "{x}"),
            Moment::Infinite => f.write_str("inf"),
        }
    }
}

/// The parametric family and its parameters. Obtain one through
/// [`LifetimeDistribution::family`]; construct through the validating
/// constructors on [`LifetimeDistribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { a: f64, b: f64 },
    Deterministic { a: f64 },
    /// Tail `P(T > x) = (1 + x)^(-alpha)`.
    ParetoShifted { alpha: f64 },
    /// `pmf[i]` is the mass at `(i + 1) * delta`.
    Lattice { delta: f64, pmf: Vec<f64> },
    Mixture { weights: Vec<f64>, components: Vec<LifetimeDistribution> },
}

/// A validated lifetime distribution. Immutable and `Send + Sync`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct LifetimeDistribution {
    family: Family,
}

impl TryFrom<Family> for LifetimeDistribution {
    type Error = LifetimeError;

    fn try_from(family: Family) -> Result<Self, Self::Error> {
        validate(&family)?;
        Ok(Self { family })
    }
}

impl From<LifetimeDistribution> for Family {
    fn from(d: LifetimeDistribution) -> Self {
        d.family
    }
}

fn positive(family: &'static str, name: &'static str, value: f64) -> Result<(), LifetimeError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(LifetimeError::InvalidParameter { family, name, value, reason: "must be finite and > 0" })
    }
}

fn probability_vector(family: &'static str, p: &[f64]) -> Result<(), LifetimeError> {
    if p.is_empty() {
        return Err(LifetimeError::InvalidProbabilities { family, reason: "empty".into() });
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(LifetimeError::InvalidProbabilities {
            family,
            reason: format!("entry {x} is negative or not finite"),
        });
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(LifetimeError::InvalidProbabilities {
            family,
            reason: format!("entries sum to {total}, expected 1"),
        });
    }
    Ok(())
}

fn validate(family: &Family) -> Result<(), LifetimeError> {
    match family {
        Family::Exponential { rate } => positive("exponential", "rate", *rate),
        Family::Gamma { shape, rate } => {
            positive("gamma", "shape", *shape)?;
            positive("gamma", "rate", *rate)
        }
        Family::Uniform { a, b } => {
            if !(a.is_finite() && *a >= 0.0) {
                return Err(LifetimeError::InvalidParameter {
                    family: "uniform",
                    name: "a",
                    value: *a,
                    reason: "must be finite and >= 0",
                });
            }
            if !(b.is_finite() && b > a) {
                return Err(LifetimeError::InvalidParameter {
                    family: "uniform",
                    name: "b",
                    value: *b,
                    reason: "must be finite and > a",
                });
            }
            Ok(())
        }
        Family::Deterministic { a } => positive("deterministic", "a", *a),
        Family::ParetoShifted { alpha } => {
            if alpha.is_finite() && *alpha > 1.0 {
                Ok(())
            } else {
                Err(LifetimeError::InvalidParameter {
                    family: "pareto_shifted",
                    name: "alpha",
                    value: *alpha,
                    reason: "must be > 1 for a finite mean",
                })
            }
        }
        Family::Lattice { delta, pmf } => {
            positive("lattice", "delta", *delta)?;
            probability_vector("lattice", pmf)
        }
        Family::Mixture { weights, components } => {
            if weights.len() != components.len() {
                return Err(LifetimeError::InvalidProbabilities {
                    family: "mixture",
                    reason: format!("{} weights for {} components", weights.len(), components.len()),
                });
            }
            probability_vector("mixture", weights)
        }
    }
}

fn rising_factorial(x: f64, j: u32) -> f64 {
    (0..j).map(|i| x + i as f64).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `((1 + t)^s - 1) / s`, continuous at `s = 0`.
fn pareto_power_integral(s: f64, t: f64) -> f64 {
    let l = t.ln_1p();
    if s.abs() < 1e-12 {
        l
    } else {
        (s * l).exp_m1() / s
    }
}

impl LifetimeDistribution {
    pub fn exponential(rate: f64) -> Result<Self, LifetimeError> {
        Family::Exponential { rate }.try_into()
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self, LifetimeError> {
        Family::Gamma { shape, rate }.try_into()
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self, LifetimeError> {
        Family::Uniform { a, b }.try_into()
    }

    pub fn deterministic(a: f64) -> Result<Self, LifetimeError> {
        Family::Deterministic { a }.try_into()
    }

    pub fn pareto_shifted(alpha: f64) -> Result<Self, LifetimeError> {
        Family::ParetoShifted { alpha }.try_into()
    }

    pub fn lattice(delta: f64, pmf: Vec<f64>) -> Result<Self, LifetimeError> {
        Family::Lattice { delta, pmf }.try_into()
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<LifetimeDistribution>) -> Result<Self, LifetimeError> {
        Family::Mixture { weights, components }.try_into()
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Draws one lifetime. The draw is strictly positive and a pure function
    /// of the generator state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.sample_raw(rng);
            if x > 0.0 {
                return x;
            }
        }
    }

    fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Family::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate).expect("validated gamma").sample(rng),
            Family::Uniform { a, b } => {
                let u: f64 = Open01.sample(rng);
                a + (b - a) * u
            }
            Family::Deterministic { a } => *a,
            Family::ParetoShifted { alpha } => {
                let u: f64 = Open01.sample(rng);
                (-u.ln() / alpha).exp_m1()
            }
            Family::Lattice { delta, pmf } => delta * (pick_index(pmf, rng) + 1) as f64,
            Family::Mixture { weights, components } => components[pick_index(weights, rng)].sample(rng),
        }
    }

    /// `E[T^j 1(T > t)]` for `j <= 3`.
    pub fn upper_partial_moment(&self, j: u32, t: f64) -> Moment {
        debug_assert!(j <= 3);
        match &self.family {
            Family::Exponential { rate } => {
                let x = rate * t;
                let mut term = 1.0;
                let mut acc = 1.0;
                // e^{-x} Σ_{i=0}^{j} x^i / i!  scaled by j! / rate^j
                for i in 1..=j {
                    term *= x / i as f64;
                    acc += term;
                }
                Moment::Finite(rising_factorial(1.0, j) / rate.powi(j as i32) * acc * (-x).exp())
            }
            Family::Gamma { shape, rate } => {
                let q = if t <= 0.0 { 1.0 } else { gamma_ur(shape + j as f64, rate * t) };
                Moment::Finite(rising_factorial(*shape, j) / rate.powi(j as i32) * q)
            }
            Family::Uniform { a, b } => {
                let c = t.clamp(*a, *b);
                let k = (j + 1) as i32;
                Moment::Finite((b.powi(k) - c.powi(k)) / (k as f64 * (b - a)))
            }
            Family::Deterministic { a } => Moment::Finite(if *a > t { a.powi(j as i32) } else { 0.0 }),
            Family::ParetoShifted { alpha } => {
                if *alpha <= j as f64 {
                    return Moment::Infinite;
                }
                let t = t.max(0.0);
                let sign = |i: u32| if (j - i) % 2 == 0 { 1.0 } else { -1.0 };
                let v: f64 = (0..=j)
                    .map(|i| {
                        let s = i as f64 - alpha;
                        sign(i) * binomial(j, i) * alpha * (s * t.ln_1p()).exp() / (alpha - i as f64)
                    })
                    .sum();
                Moment::Finite(v.max(0.0))
            }
            Family::Lattice { delta, pmf } => Moment::Finite(
                pmf.iter()
                    .enumerate()
                    .map(|(i, p)| (delta * (i + 1) as f64, p))
                    .filter(|(x, _)| *x > t)
                    .map(|(x, p)| p * x.powi(j as i32))
                    .sum(),
            ),
            Family::Mixture { weights, components } => {
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    if *w == 0.0 {
                        continue;
                    }
                    match c.upper_partial_moment(j, t) {
                        Moment::Finite(x) => acc += w * x,
                        Moment::Infinite => return Moment::Infinite,
                    }
                }
                Moment::Finite(acc)
            }
        }
    }

    /// `E[T^j 1(T <= t)]` for `j <= 3`; finite for every finite `t`.
    pub fn lower_partial_moment(&self, j: u32, t: f64) -> f64 {
        debug_assert!(j <= 3);
        if t <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Exponential { rate } => {
                rising_factorial(1.0, j) / rate.powi(j as i32) * gamma_lr(1.0 + j as f64, rate * t)
            }
            Family::Gamma { shape, rate } => {
                rising_factorial(*shape, j) / rate.powi(j as i32) * gamma_lr(shape + j as f64, rate * t)
            }
            Family::Uniform { a, b } => {
                let c = t.clamp(*a, *b);
                let k = (j + 1) as i32;
                (c.powi(k) - a.powi(k)) / (k as f64 * (b - a))
            }
            Family::Deterministic { a } => {
                if *a <= t {
                    a.powi(j as i32)
                } else {
                    0.0
                }
            }
            Family::ParetoShifted { alpha } => {
                let sign = |i: u32| if (j - i) % 2 == 0 { 1.0 } else { -1.0 };
                let v: f64 = (0..=j)
                    .map(|i| sign(i) * binomial(j, i) * alpha * pareto_power_integral(i as f64 - alpha, t))
                    .sum();
                v.max(0.0)
            }
            Family::Lattice { delta, pmf } => pmf
                .iter()
                .enumerate()
                .map(|(i, p)| (delta * (i + 1) as f64, p))
                .filter(|(x, _)| *x <= t)
                .map(|(x, p)| p * x.powi(j as i32))
                .sum(),
            Family::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.lower_partial_moment(j, t))
                .sum(),
        }
    }

    /// Exact `E[T^k]` for `k ∈ {1, 2, 3}`.
    pub fn moment(&self, k: u32) -> Result<Moment, LifetimeError> {
        if !(1..=3).contains(&k) {
            return Err(LifetimeError::UnsupportedMoment(k));
        }
        Ok(self.upper_partial_moment(k, 0.0))
    }

    pub fn mean(&self) -> f64 {
        self.upper_partial_moment(1, 0.0)
            .finite()
            .expect("validated distributions have a finite mean")
    }

    /// Long-run rate `1 / E[T]`.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean()
    }

    pub fn variance(&self) -> Moment {
        let m = self.mean();
        self.upper_partial_moment(2, 0.0).map(|m2| (m2 - m * m).max(0.0))
    }

    /// `P(T > x)`, right-continuous and nonincreasing.
    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match &self.family {
            Family::Exponential { rate } => (-rate * x).exp(),
            _ => self
                .upper_partial_moment(0, x)
                .finite()
                .expect("zeroth moment is finite")
                .clamp(0.0, 1.0),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    /// `E[v ∧ T] = ∫_0^v P(T > u) du`. `v = ∞` gives the mean.
    pub fn truncated_mean(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v.is_infinite() {
            return self.mean();
        }
        match &self.family {
            Family::Exponential { rate } => -(-rate * v).exp_m1() / rate,
            _ => self.lower_partial_moment(1, v) + v * self.tail(v),
        }
    }

    /// CDF of the equilibrium (stationary excess) law, `λ ∫_0^x P(T > u) du`.
    pub fn equilibrium_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (self.truncated_mean(x) / self.mean()).clamp(0.0, 1.0)
    }

    /// Stop-loss transform `E[(T - t)^+] = ∫_t^∞ P(T > x) dx`.
    pub fn excess_mean(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let m1 = self.upper_partial_moment(1, t).finite().expect("finite mean");
        (m1 - t * self.tail(t)).max(0.0)
    }

    /// `E[((T - t)^+)^2] = ∫_t^∞ 2 (x - t) P(T > x) dx`.
    pub fn excess_second_moment(&self, t: f64) -> Moment {
        let t = t.max(0.0);
        let m1 = self.upper_partial_moment(1, t).finite().expect("finite mean");
        self.upper_partial_moment(2, t)
            .map(|m2| (m2 - 2.0 * t * m1 + t * t * self.tail(t)).max(0.0))
    }

    /// `∫_0^t E[(T - u)^+] du = E[T (T ∧ t) - (T ∧ t)^2 / 2]`.
    pub fn integrated_excess_mean(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let m1 = self.upper_partial_moment(1, t).finite().expect("finite mean");
        0.5 * self.lower_partial_moment(2, t) + t * m1 - 0.5 * t * t * self.tail(t)
    }

    /// `∫_0^t E[((T - u)^+)^2] du = t E[(T - t) T 1(T > t)] + E[(T ∧ t)^3] / 3`.
    pub fn integrated_excess_second_moment(&self, t: f64) -> Moment {
        if t <= 0.0 {
            return Moment::Finite(0.0);
        }
        let m1 = self.upper_partial_moment(1, t).finite().expect("finite mean");
        let tail = self.tail(t);
        let lower3 = self.lower_partial_moment(3, t);
        self.upper_partial_moment(2, t)
            .map(|m2| t * (m2 - t * m1) + (lower3 + t * t * t * tail) / 3.0)
    }

    /// Point masses `(location, mass)` with positive mass.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match &self.family {
            Family::Deterministic { a } => vec![(*a, 1.0)],
            Family::Lattice { delta, pmf } => pmf
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(i, p)| (delta * (i + 1) as f64, *p))
                .collect(),
            Family::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .filter(|(w, _)| **w > 0.0)
                .flat_map(|(w, c)| c.atoms().into_iter().map(move |(x, p)| (x, w * p)))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Tail of the absolutely continuous part (sub-probability).
    pub fn continuous_tail(&self, x: f64) -> f64 {
        match &self.family {
            Family::Deterministic { .. } | Family::Lattice { .. } => 0.0,
            Family::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.continuous_tail(x))
                .sum(),
            _ => self.tail(x),
        }
    }

    fn has_continuous_part(&self) -> bool {
        match &self.family {
            Family::Deterministic { .. } | Family::Lattice { .. } => false,
            Family::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .any(|(w, c)| *w > 0.0 && c.has_continuous_part()),
            _ => true,
        }
    }

    /// Span of the lattice carrying all the mass, if any. Decided from the
    /// family structure: a distribution with an absolutely continuous part
    /// is never arithmetic.
    pub fn arithmetic_span(&self) -> Option<f64> {
        if self.has_continuous_part() {
            return None;
        }
        let locations: Vec<f64> = self.atoms().into_iter().map(|(x, _)| x).collect();
        lattice_span(&locations)
    }

    pub fn is_arithmetic(&self) -> bool {
        self.arithmetic_span().is_some()
    }
}

fn pick_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding in the cumulative sum: fall back to the last positive entry.
    probabilities.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp1() -> LifetimeDistribution {
        LifetimeDistribution::exponential(1.0).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(LifetimeDistribution::exponential(0.0).is_err());
        assert!(LifetimeDistribution::gamma(2.0, -1.0).is_err());
        assert!(LifetimeDistribution::uniform(1.0, 1.0).is_err());
        assert!(LifetimeDistribution::uniform(-0.5, 1.0).is_err());
        assert!(LifetimeDistribution::pareto_shifted(1.0).is_err());
        assert!(LifetimeDistribution::lattice(0.5, vec![0.5, 0.4]).is_err());
        assert!(LifetimeDistribution::mixture(vec![0.5, 0.5], vec![exp1()]).is_err());
        assert!(LifetimeDistribution::mixture(vec![1.5, -0.5], vec![exp1(), exp1()]).is_err());
    }

    #[test]
    fn mixture_weights_within_tolerance() {
        let w = vec![0.1, 0.2, 0.7 + 5e-13];
        assert!(LifetimeDistribution::mixture(w, vec![exp1(), exp1(), exp1()]).is_ok());
    }

    #[test]
    fn deterministic_sample_is_the_point() {
        let d = LifetimeDistribution::deterministic(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        assert_eq!(d.sample(&mut rng), 1.0);
    }

    #[test]
    fn same_seed_same_draw() {
        let d = exp1();
        let a = d.sample(&mut ChaCha8Rng::seed_from_u64(5));
        let b = d.sample(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn moments_examples() {
        assert_eq!(exp1().moment(2).unwrap(), Moment::Finite(2.0));
        let det = LifetimeDistribution::deterministic(2.0).unwrap();
        assert_eq!(det.moment(3).unwrap(), Moment::Finite(8.0));
        let p = LifetimeDistribution::pareto_shifted(1.5).unwrap();
        assert_eq!(p.moment(2).unwrap(), Moment::Infinite);
        assert_eq!(LifetimeDistribution::pareto_shifted(2.5).unwrap().moment(3).unwrap(), Moment::Infinite);
        assert_eq!(exp1().moment(4), Err(LifetimeError::UnsupportedMoment(4)));
        assert_eq!(exp1().moment(0), Err(LifetimeError::UnsupportedMoment(0)));
    }

    #[test]
    fn gamma_moments_closed_form() {
        let g = LifetimeDistribution::gamma(2.0, 2.0).unwrap();
        assert_abs_diff_eq!(g.mean(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.moment(2).unwrap().finite().unwrap(), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.moment(3).unwrap().finite().unwrap(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn tail_examples() {
        for d in [
            exp1(),
            LifetimeDistribution::gamma(2.0, 2.0).unwrap(),
            LifetimeDistribution::deterministic(1.0).unwrap(),
            LifetimeDistribution::uniform(0.0, 2.0).unwrap(),
            LifetimeDistribution::pareto_shifted(1.5).unwrap(),
        ] {
            assert_eq!(d.tail(0.0), 1.0);
        }
        let p = LifetimeDistribution::pareto_shifted(1.5).unwrap();
        assert_abs_diff_eq!(p.tail(3.0), 0.125, epsilon = 1e-15);
        assert_eq!(LifetimeDistribution::deterministic(1.0).unwrap().tail(1.0), 0.0);
    }

    #[test]
    fn truncated_mean_examples() {
        let det = LifetimeDistribution::deterministic(2.0).unwrap();
        assert_eq!(det.truncated_mean(1.0), 1.0);
        assert_abs_diff_eq!(exp1().truncated_mean(1.0), 0.632_120_558_828_557_7, epsilon = 1e-14);
        assert_abs_diff_eq!(exp1().truncated_mean(60.0), 1.0, epsilon = 1e-14);
        assert_eq!(exp1().truncated_mean(f64::INFINITY), 1.0);
    }

    #[test]
    fn equilibrium_examples() {
        assert_eq!(exp1().equilibrium_cdf(0.0), 0.0);
        let e = LifetimeDistribution::exponential(2.5).unwrap();
        for x in [0.1, 0.7, 3.0] {
            assert_abs_diff_eq!(e.equilibrium_cdf(x), 1.0 - (-2.5 * x).exp(), epsilon = 1e-14);
        }
        let det = LifetimeDistribution::deterministic(3.0).unwrap();
        assert_abs_diff_eq!(det.equilibrium_cdf(1.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(LifetimeDistribution::deterministic(1.0).unwrap().arithmetic_span(), Some(1.0));
        assert_eq!(exp1().arithmetic_span(), None);
        let mix = LifetimeDistribution::mixture(
            vec![0.5, 0.5],
            vec![
                LifetimeDistribution::deterministic(1.0).unwrap(),
                LifetimeDistribution::deterministic(1.5).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(mix.arithmetic_span(), Some(0.5));
        let lat = LifetimeDistribution::lattice(0.5, vec![0.0, 0.3, 0.0, 0.7]).unwrap();
        assert_eq!(lat.arithmetic_span(), Some(1.0));
        let with_density = LifetimeDistribution::mixture(
            vec![0.5, 0.5],
            vec![LifetimeDistribution::deterministic(1.0).unwrap(), exp1()],
        )
        .unwrap();
        assert_eq!(with_density.arithmetic_span(), None);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let d: LifetimeDistribution = serde_json::from_str(r#"{"kind":"gamma","shape":2.0,"rate":2.0}"#).unwrap();
        assert_eq!(d, LifetimeDistribution::gamma(2.0, 2.0).unwrap());
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"kind":"gamma","shape":2.0,"rate":2.0}"#);
        assert!(serde_json::from_str::<LifetimeDistribution>(r#"{"kind":"gamma","shape":2.0,"rate":2.0,"x":1}"#).is_err());
        assert!(serde_json::from_str::<LifetimeDistribution>(r#"{"kind":"exponential","rate":-1}"#).is_err());
    }

    #[test]
    fn excess_identities_for_deterministic() {
        let det = LifetimeDistribution::deterministic(1.0).unwrap();
        assert_abs_diff_eq!(det.excess_mean(0.25), 0.75, epsilon = 1e-15);
        assert_eq!(det.excess_second_moment(0.5), Moment::Finite(0.25));
        assert_abs_diff_eq!(
            det.integrated_excess_second_moment(2.0).finite().unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
    }
}
