//! Pathwise martingale decompositions of a counting process.
//!
//! For a path with inter-arrivals `T_n` and a rate `λ`,
//!
//! ```text
//! N(t) = λ (t + R(t)) + M(t),        M(t) = Σ_{n=1}^{N(t)} (1 - λ T_n)
//! ```
//!
//! holds exactly (with `t + R(t) - T_0` on delayed paths). The truncated form
//! replaces `λ` by the predictable `λ̃(t) = 1 / E[v ∧ T_n | past]` supplied
//! by a [`ConditionalMeanOracle`]. Everything here is a pure function of the
//! path; residuals are checked against [`tol_path`].

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::lifetimes::{LifetimeDistribution, Moment};
use crate::numeric::{integrate, KahanSum, QUAD_ABS_TOL};
use crate::processes::{ProcessError, ProcessSpec, SamplePath};

/// Tolerance on the relative consistency of a functional's declared jumps.
pub const JUMP_CONSISTENCY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("{0} requires a finite second moment")]
    InfiniteSecondMoment(&'static str),
    #[error("rate must be finite and > 0, got {0}")]
    InvalidRate(f64),
    #[error("truncation level must be > 0, got {0}")]
    InvalidTruncation(f64),
    #[error("conditional mean {value} at interval {n} is outside (0, v]")]
    OracleOutOfRange { n: usize, value: f64 },
    #[error("declared jump {declared} at event {n} disagrees with the observed jump {observed}")]
    InconsistentJump { n: usize, declared: f64, observed: f64 },
    #[error("functional terms sum to {sum}, but Y(t) = {value}")]
    InconsistentTotal { sum: f64, value: f64 },
}

/// Rounding allowance for the exact pathwise identities.
pub fn tol_path(n: usize) -> f64 {
    1e-9 * (1.0 + n as f64)
}

fn check_rate(lambda: f64) -> Result<(), DecompositionError> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(DecompositionError::InvalidRate(lambda))
    }
}

/// `M(t) = Σ_{n=1}^{N(t)} (1 - λ T_n)`.
pub fn martingale(path: &SamplePath, lambda: f64, t: f64) -> Result<f64, DecompositionError> {
    check_rate(lambda)?;
    let n = path.count(t)?;
    Ok((1..=n).map(|k| 1.0 - lambda * path.inter_arrival(k)).collect::<KahanSum>().value())
}

/// `N(t) - λ(t + R(t)) - M(t)`, with `T_0` subtracted inside the bracket on
/// delayed paths.
pub fn check_identity(path: &SamplePath, lambda: f64, t: f64) -> Result<f64, DecompositionError> {
    let n = path.count(t)?;
    let r = path.residual(t)?;
    let m = martingale(path, lambda, t)?;
    let shift = if path.is_delayed() { path.inter_arrival(0) } else { 0.0 };
    Ok(n as f64 - lambda * (t + r - shift) - m)
}

/// `S_{N(t)} - E[T] N(t) + E[T] M(t)` with `M` at rate `1 / E[T]`. On delayed
/// paths `S_n` counts from the first event.
pub fn wald_residual(path: &SamplePath, mean_t: f64, t: f64) -> Result<f64, DecompositionError> {
    let n = path.count(t)?;
    let m = martingale(path, 1.0 / mean_t, t)?;
    let start = if path.is_delayed() { path.inter_arrival(0) } else { 0.0 };
    let s = path.partial_sum(n) - start;
    Ok(s - mean_t * n as f64 + mean_t * m)
}

/// Optional quadratic variation `[M](t) = Σ (1 - λ T_n)^2`.
pub fn optional_qv(path: &SamplePath, lambda: f64, t: f64) -> Result<f64, DecompositionError> {
    check_rate(lambda)?;
    let n = path.count(t)?;
    Ok((1..=n)
        .map(|k| {
            let x = 1.0 - lambda * path.inter_arrival(k);
            x * x
        })
        .collect::<KahanSum>()
        .value())
}

/// Predictable quadratic variation `⟨M⟩(t) = λ^2 σ^2 N(t)`.
pub fn predictable_qv(path: &SamplePath, lambda: f64, sigma2: Moment, t: f64) -> Result<f64, DecompositionError> {
    let Moment::Finite(sigma2) = sigma2 else {
        return Err(DecompositionError::InfiniteSecondMoment("predictable quadratic variation"));
    };
    check_rate(lambda)?;
    Ok(lambda * lambda * sigma2 * path.count(t)? as f64)
}

/// Upper bound `σ^2 (λ t + λ^2 E[T^2])` on `E[T]^2 E[M^2(t)]`.
pub fn quadratic_error_bound(dist: &LifetimeDistribution, t: f64) -> Result<f64, DecompositionError> {
    let (Moment::Finite(sigma2), Moment::Finite(m2)) = (dist.variance(), dist.upper_partial_moment(2, 0.0)) else {
        return Err(DecompositionError::InfiniteSecondMoment("quadratic error bound"));
    };
    let lambda = dist.rate();
    Ok(sigma2 * (lambda * t + lambda * lambda * m2))
}

/// Conditional mean `E[v ∧ T_n | F_{t_{n-1}-}]` of the truncated `n`-th
/// inter-arrival given the past. `n = 0` is the initial delay interval of a
/// delayed path.
pub trait ConditionalMeanOracle {
    fn truncated_mean(&self, path: &SamplePath, n: usize, v: f64) -> f64;
}

/// The oracle implied by a [`ProcessSpec`].
///
/// The delay interval of a delayed process uses the lifetime law.
#[derive(Debug, Clone)]
pub struct SpecOracle<'a> {
    kind: OracleKind<'a>,
}

#[derive(Debug, Clone)]
enum OracleKind<'a> {
    Iid(&'a LifetimeDistribution),
    Modulated(Vec<&'a LifetimeDistribution>),
    MovingAverage { m: usize, base: &'a LifetimeDistribution },
}

impl<'a> SpecOracle<'a> {
    pub fn new(spec: &'a ProcessSpec) -> Result<Self, ProcessError> {
        spec.validate()?;
        let kind = match spec {
            ProcessSpec::Plain { lifetime } | ProcessSpec::Delayed { lifetime, .. } => OracleKind::Iid(lifetime),
            ProcessSpec::Modulated { .. } => OracleKind::Modulated(spec.resolve_modulation()?.lifetimes),
            ProcessSpec::StationaryMa { m, base } => OracleKind::MovingAverage { m: *m, base },
        };
        Ok(Self { kind })
    }
}

/// `E[v ∧ (s + U) / m]` for `U ~ base`, where `s` is the known part of the
/// moving-average window.
pub fn moving_average_truncated_mean(base: &LifetimeDistribution, m: usize, known_sum: f64, v: f64) -> f64 {
    let mv = m as f64 * v;
    if mv > known_sum {
        (known_sum + base.truncated_mean(mv - known_sum)) / m as f64
    } else {
        v
    }
}

impl ConditionalMeanOracle for SpecOracle<'_> {
    fn truncated_mean(&self, path: &SamplePath, n: usize, v: f64) -> f64 {
        match &self.kind {
            OracleKind::Iid(d) => d.truncated_mean(v),
            OracleKind::Modulated(lifetimes) => {
                let states = path.states().expect("modulated path carries states");
                lifetimes[states[n - 1]].truncated_mean(v)
            }
            OracleKind::MovingAverage { m, base } => {
                let u = path.ma_draws().expect("moving-average path carries base draws");
                let known: f64 = u[n - 1..n - 1 + m - 1].iter().sum();
                moving_average_truncated_mean(base, *m, known, v)
            }
        }
    }
}

fn check_truncation(v: f64) -> Result<(), DecompositionError> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(DecompositionError::InvalidTruncation(v))
    }
}

fn interval_rate<O: ConditionalMeanOracle + ?Sized>(
    path: &SamplePath,
    oracle: &O,
    n: usize,
    v: f64,
) -> Result<f64, DecompositionError> {
    let value = oracle.truncated_mean(path, n, v);
    if !(value > 0.0 && value <= v * (1.0 + 1e-12)) {
        return Err(DecompositionError::OracleOutOfRange { n, value });
    }
    Ok(1.0 / value)
}

/// `λ̃(t) = 1 / E[v ∧ T_n | F_{t_{n-1}-}]` for `t ∈ [t_{n-1}, t_n)`.
pub fn truncated_lambda<O: ConditionalMeanOracle + ?Sized>(
    path: &SamplePath,
    oracle: &O,
    v: f64,
    t: f64,
) -> Result<f64, DecompositionError> {
    check_truncation(v)?;
    let n = path.count(t)?;
    interval_rate(path, oracle, n, v)
}

/// The four terms of the truncated decomposition at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedDecomposition {
    /// `-λ̃(0) (v ∧ T_0)` on delayed paths, else 0.
    pub initial: f64,
    /// `∫_0^t λ̃(s) 1(R(s) <= v) ds`.
    pub drift_integral: f64,
    /// `λ̃(t) (R(t) ∧ v)`.
    pub boundary: f64,
    /// `M^(v)(t) = Σ_{n=1}^{N(t)} (1 - λ̃_n (v ∧ T_n))`.
    pub martingale: f64,
    /// `N(t)` minus the sum of the other terms.
    pub residual: f64,
    pub count: usize,
}

pub fn truncated_decomposition<O: ConditionalMeanOracle + ?Sized>(
    path: &SamplePath,
    oracle: &O,
    v: f64,
    t: f64,
) -> Result<TruncatedDecomposition, DecompositionError> {
    check_truncation(v)?;
    let count = path.count(t)?;
    let r = path.residual(t)?;
    let events = path.events();
    let first = if path.is_delayed() { 0 } else { 1 };
    let mut drift = KahanSum::new();
    let mut martingale = KahanSum::new();
    let mut initial = 0.0;
    let mut current_rate = 0.0;
    for n in first..=count {
        let rate = interval_rate(path, oracle, n, v)?;
        let (a, b) = if n == 0 { (0.0, events[0]) } else { (events[n - 1], events[n]) };
        let lo = a.max(b - v);
        let hi = b.min(t);
        if hi > lo {
            drift.add(rate * (hi - lo));
        }
        let tn = path.inter_arrival(n);
        if n == 0 {
            initial = -rate * tn.min(v);
        } else {
            martingale.add(1.0 - rate * tn.min(v));
        }
        current_rate = rate;
    }
    let boundary = current_rate * r.min(v);
    let drift_integral = drift.value();
    let martingale = martingale.value();
    let residual = count as f64 - (initial + drift_integral + boundary + martingale);
    Ok(TruncatedDecomposition { initial, drift_integral, boundary, martingale, residual, count })
}

/// Residual of the truncated decomposition at `t`.
pub fn truncated_identity<O: ConditionalMeanOracle + ?Sized>(
    path: &SamplePath,
    oracle: &O,
    v: f64,
    t: f64,
) -> Result<f64, DecompositionError> {
    truncated_decomposition(path, oracle, v, t).map(|d| d.residual)
}

/// A real functional `Y` of the path that is differentiable between events
/// and jumps only at events.
pub trait PathFunctional {
    /// `Y(0-)`.
    fn initial(&self, path: &SamplePath) -> f64;
    /// `Y(t)`, right-continuous.
    fn value(&self, path: &SamplePath, t: f64) -> f64;
    /// Right derivative of `Y` at a non-event time.
    fn right_derivative(&self, path: &SamplePath, s: f64) -> f64;
    /// `Y(t_n) - Y(t_n-)` at stored event `n`.
    fn jump(&self, path: &SamplePath, n: usize) -> f64;
}

/// Terms of `Y(t) = Y(0-) + ∫_0^t Y' + D_Y(t) + M_Y(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalDecomposition {
    pub initial: f64,
    pub drift_integral: f64,
    pub d: f64,
    pub m: f64,
    pub value: f64,
}

/// Splits every jump of `Y` into its predictable part
/// `E[Y(t_n) | F_{t_n-}] - Y(t_n-)` and the martingale remainder.
/// `conditional_mean(path, n)` gives `E[Y(t_n) | F_{t_n-}]` for stored event
/// `n`.
pub fn decompose_functional<Y, C>(
    path: &SamplePath,
    y: &Y,
    conditional_mean: C,
    t: f64,
) -> Result<FunctionalDecomposition, DecompositionError>
where
    Y: PathFunctional + ?Sized,
    C: Fn(&SamplePath, usize) -> f64,
{
    let count = path.count(t)?;
    let events = path.events();
    let initial = y.initial(path);
    let mut drift = KahanSum::new();
    let mut d = KahanSum::new();
    let mut m = KahanSum::new();
    let piece = |a: f64, b: f64| -> f64 {
        if b > a {
            integrate(|s| y.right_derivative(path, s), a, b, QUAD_ABS_TOL).value
        } else {
            0.0
        }
    };
    let mut prev_time = 0.0;
    let mut prev_value = initial;
    for (n, &tn) in events.iter().enumerate().take(count) {
        let integral = piece(prev_time, tn);
        drift.add(integral);
        let left = prev_value + integral;
        let after = y.value(path, tn);
        let declared = y.jump(path, n);
        let observed = after - left;
        if (observed - declared).abs() > JUMP_CONSISTENCY_TOL * after.abs().max(left.abs()).max(1.0) {
            return Err(DecompositionError::InconsistentJump { n, declared, observed });
        }
        let expected = conditional_mean(path, n);
        d.add(expected - left);
        m.add(after - expected);
        prev_time = tn;
        prev_value = after;
    }
    drift.add(piece(prev_time, t));
    let value = y.value(path, t);
    let out = FunctionalDecomposition {
        initial,
        drift_integral: drift.value(),
        d: d.value(),
        m: m.value(),
        value,
    };
    let sum = out.initial + out.drift_integral + out.d + out.m;
    if (sum - value).abs() > tol_path(count) * value.abs().max(1.0) {
        return Err(DecompositionError::InconsistentTotal { sum, value });
    }
    Ok(out)
}

/// `Y = N`. Its jumps are predictable, so `D_Y = N` and `M_Y = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CountFunctional;

impl CountFunctional {
    pub fn conditional_mean(path: &SamplePath, n: usize) -> f64 {
        let _ = path;
        (n + 1) as f64
    }
}

impl PathFunctional for CountFunctional {
    fn initial(&self, _path: &SamplePath) -> f64 {
        0.0
    }

    fn value(&self, path: &SamplePath, t: f64) -> f64 {
        path.count_unchecked(t) as f64
    }

    fn right_derivative(&self, _path: &SamplePath, _s: f64) -> f64 {
        0.0
    }

    fn jump(&self, _path: &SamplePath, _n: usize) -> f64 {
        1.0
    }
}

/// `Y = N - λ R` for a renewal path with lifetime mean `1 / λ`.
#[derive(Debug, Clone, Copy)]
pub struct RenewalFunctional {
    pub lambda: f64,
}

impl RenewalFunctional {
    /// `E[Y(t_n) | F_{t_n-}] = N(t_n) - λ E[T]`.
    pub fn conditional_mean(&self, path: &SamplePath, n: usize, mean_t: f64) -> f64 {
        let _ = path;
        (n + 1) as f64 - self.lambda * mean_t
    }
}

impl PathFunctional for RenewalFunctional {
    fn initial(&self, path: &SamplePath) -> f64 {
        if path.is_delayed() {
            -self.lambda * path.inter_arrival(0)
        } else {
            0.0
        }
    }

    fn value(&self, path: &SamplePath, t: f64) -> f64 {
        let n = path.count_unchecked(t);
        n as f64 - self.lambda * (path.events()[n] - t)
    }

    fn right_derivative(&self, _path: &SamplePath, _s: f64) -> f64 {
        self.lambda
    }

    fn jump(&self, path: &SamplePath, n: usize) -> f64 {
        1.0 - self.lambda * path.inter_arrival(n + 1)
    }
}

/// `Y = M^2` with `M` at rate `λ`.
#[derive(Debug, Clone, Copy)]
pub struct SquaredMartingaleFunctional {
    pub lambda: f64,
}

impl SquaredMartingaleFunctional {
    fn left_martingale(&self, path: &SamplePath, n: usize) -> f64 {
        (1..=n).map(|k| 1.0 - self.lambda * path.inter_arrival(k)).collect::<KahanSum>().value()
    }

    /// `E[M(t_n)^2 | F_{t_n-}] = M(t_n-)^2 + λ^2 σ^2`.
    pub fn conditional_mean(&self, path: &SamplePath, n: usize, sigma2: f64) -> f64 {
        let m = self.left_martingale(path, n);
        m * m + self.lambda * self.lambda * sigma2
    }
}

impl PathFunctional for SquaredMartingaleFunctional {
    fn initial(&self, _path: &SamplePath) -> f64 {
        0.0
    }

    fn value(&self, path: &SamplePath, t: f64) -> f64 {
        let m = self.left_martingale(path, path.count_unchecked(t));
        m * m
    }

    fn right_derivative(&self, _path: &SamplePath, _s: f64) -> f64 {
        0.0
    }

    fn jump(&self, path: &SamplePath, n: usize) -> f64 {
        let before = self.left_martingale(path, n);
        let xi = 1.0 - self.lambda * path.inter_arrival(n + 1);
        2.0 * before * xi + xi * xi
    }
}

/// All decomposition quantities of one path at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub t: f64,
    pub n: usize,
    pub r: f64,
    pub m: f64,
    pub drift: f64,
    pub identity_residual: f64,
    pub optional_qv: f64,
    pub predictable_qv: Option<f64>,
    pub wald_residual: f64,
}

impl DecompositionReport {
    /// Builds the report at rate `λ = 1 / mean_t`.
    pub fn compute(path: &SamplePath, mean_t: f64, sigma2: Moment, t: f64) -> Result<Self, DecompositionError> {
        let lambda = 1.0 / mean_t;
        let n = path.count(t)?;
        let r = path.residual(t)?;
        let shift = if path.is_delayed() { path.inter_arrival(0) } else { 0.0 };
        Ok(Self {
            t,
            n,
            r,
            m: martingale(path, lambda, t)?,
            drift: lambda * (t + r - shift),
            identity_residual: check_identity(path, lambda, t)?,
            optional_qv: optional_qv(path, lambda, t)?,
            predictable_qv: predictable_qv(path, lambda, sigma2, t).ok(),
            wald_residual: wald_residual(path, mean_t, t)?,
        })
    }

    pub fn within_tolerance(&self) -> bool {
        self.identity_residual.abs() <= tol_path(self.n) && self.wald_residual.abs() <= tol_path(self.n) * (1.0 + self.drift.abs())
    }

    pub const CSV_HEADER: &'static str = "t,n,r,m,drift,identity_residual,optional_qv,predictable_qv,wald_residual";

    pub fn write_csv<W: Write>(reports: &[DecompositionReport], mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in reports {
            let pqv = r.predictable_qv.map(|x| format!("{x:.16e}")).unwrap_or_default();
            writeln!(
                w,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                r.t, r.n, r.r, r.m, r.drift, r.identity_residual, r.optional_qv, pqv, r.wald_residual
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{simulate_path, Delay};

    fn hand_path() -> SamplePath {
        SamplePath::from_events(vec![0.0, 0.5, 2.5], 2.0, false).unwrap()
    }

    fn det(a: f64) -> LifetimeDistribution {
        LifetimeDistribution::deterministic(a).unwrap()
    }

    #[test]
    fn hand_path_values() {
        let p = hand_path();
        assert_eq!(martingale(&p, 1.0, 0.7).unwrap(), -0.5);
        assert_eq!(check_identity(&p, 1.0, 0.7).unwrap(), 0.0);
        assert_eq!(optional_qv(&p, 1.0, 0.7).unwrap(), 1.25);
        assert_eq!(wald_residual(&p, 1.0, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_martingale_vanishes() {
        let p = simulate_path(&ProcessSpec::plain(det(1.0)), 10.0, 0).unwrap();
        for t in [0.0, 3.3, 10.0] {
            assert_eq!(martingale(&p, 1.0, t).unwrap(), 0.0);
            assert_eq!(optional_qv(&p, 1.0, t).unwrap(), 0.0);
            assert_eq!(predictable_qv(&p, 1.0, Moment::Finite(0.0), t).unwrap(), 0.0);
        }
    }

    #[test]
    fn predictable_qv_needs_finite_variance() {
        let p = hand_path();
        assert!(matches!(
            predictable_qv(&p, 1.0, Moment::Infinite, 1.0),
            Err(DecompositionError::InfiniteSecondMoment(_))
        ));
        assert_eq!(predictable_qv(&p, 1.0, Moment::Finite(1.0), 0.7).unwrap(), 2.0);
    }

    #[test]
    fn error_bound_values() {
        let e = LifetimeDistribution::exponential(1.0).unwrap();
        assert!((quadratic_error_bound(&e, 10.0).unwrap() - 12.0).abs() < 1e-12);
        assert_eq!(quadratic_error_bound(&det(2.0), 10.0).unwrap(), 0.0);
        let p = LifetimeDistribution::pareto_shifted(1.5).unwrap();
        assert!(quadratic_error_bound(&p, 1.0).is_err());
    }

    #[test]
    fn delayed_identity() {
        let spec = ProcessSpec::Delayed {
            delay: Delay::Distribution(det(0.5)),
            lifetime: LifetimeDistribution::exponential(1.0).unwrap(),
        };
        let p = simulate_path(&spec, 20.0, 4).unwrap();
        for t in [0.1, 0.5, 7.0, 20.0] {
            let r = check_identity(&p, 1.0, t).unwrap();
            assert!(r.abs() <= tol_path(p.count(t).unwrap()), "{r}");
        }
    }

    #[test]
    fn truncated_lambda_plain_exponential() {
        let spec = ProcessSpec::plain(LifetimeDistribution::exponential(1.0).unwrap());
        let p = simulate_path(&spec, 5.0, 1).unwrap();
        let oracle = SpecOracle::new(&spec).unwrap();
        let l = truncated_lambda(&p, &oracle, 1.0, 2.0).unwrap();
        assert!((l - 1.0 / (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let big = truncated_lambda(&p, &oracle, f64::INFINITY, 2.0).unwrap();
        assert_eq!(big, 1.0);
        assert!(truncated_lambda(&p, &oracle, 0.0, 2.0).is_err());
    }

    #[test]
    fn truncated_identity_deterministic_geometry() {
        let spec = ProcessSpec::plain(det(1.0));
        let p = simulate_path(&spec, 2.25, 0).unwrap();
        let oracle = SpecOracle::new(&spec).unwrap();
        let d = truncated_decomposition(&p, &oracle, 0.5, 2.25).unwrap();
        // λ̃ = 2 on every interval; indicator holds on [0.5,1), [1.5,2), none of [2.5,3) yet.
        assert_eq!(d.drift_integral, 2.0);
        assert_eq!(d.boundary, 1.0);
        assert_eq!(d.martingale, 0.0);
        assert_eq!(d.residual, 0.0);
    }

    #[test]
    fn truncation_inactive_matches_plain_identity() {
        let spec = ProcessSpec::plain(LifetimeDistribution::uniform(0.5, 1.5).unwrap());
        let p = simulate_path(&spec, 30.0, 9).unwrap();
        let oracle = SpecOracle::new(&spec).unwrap();
        let d = truncated_decomposition(&p, &oracle, 2.0, 17.3).unwrap();
        let m = martingale(&p, 1.0, 17.3).unwrap();
        assert!((d.martingale - m).abs() < 1e-12);
        assert!(d.residual.abs() <= tol_path(d.count));
    }

    #[test]
    fn functional_count() {
        let p = simulate_path(&ProcessSpec::plain(LifetimeDistribution::exponential(2.0).unwrap()), 10.0, 5).unwrap();
        let f = decompose_functional(&p, &CountFunctional, CountFunctional::conditional_mean, 6.0).unwrap();
        assert_eq!(f.d, p.count(6.0).unwrap() as f64);
        assert_eq!(f.m, 0.0);
        assert_eq!(f.drift_integral, 0.0);
    }

    #[test]
    fn functional_renewal() {
        let d = LifetimeDistribution::gamma(2.0, 2.0).unwrap();
        let p = simulate_path(&ProcessSpec::plain(d.clone()), 10.0, 5).unwrap();
        let y = RenewalFunctional { lambda: 1.0 };
        let f = decompose_functional(&p, &y, |p, n| y.conditional_mean(p, n, d.mean()), 6.0).unwrap();
        assert!(f.d.abs() < 1e-12);
        assert!((f.m - martingale(&p, 1.0, 6.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn functional_squared_martingale() {
        let d = LifetimeDistribution::uniform(0.0, 2.0).unwrap();
        let sigma2 = d.variance().finite().unwrap();
        let p = simulate_path(&ProcessSpec::plain(d.clone()), 12.0, 2).unwrap();
        let y = SquaredMartingaleFunctional { lambda: 1.0 };
        let f = decompose_functional(&p, &y, |p, n| y.conditional_mean(p, n, sigma2), 9.0).unwrap();
        let qv = predictable_qv(&p, 1.0, Moment::Finite(sigma2), 9.0).unwrap();
        assert!((f.d - qv).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_functional_is_rejected() {
        struct Broken;
        impl PathFunctional for Broken {
            fn initial(&self, _: &SamplePath) -> f64 {
                0.0
            }
            fn value(&self, p: &SamplePath, t: f64) -> f64 {
                p.count_unchecked(t) as f64
            }
            fn right_derivative(&self, _: &SamplePath, _: f64) -> f64 {
                0.0
            }
            fn jump(&self, _: &SamplePath, _: usize) -> f64 {
                2.0
            }
        }
        let p = hand_path();
        let r = decompose_functional(&p, &Broken, |_, n| (n + 1) as f64, 1.0);
        assert!(matches!(r, Err(DecompositionError::InconsistentJump { n: 0, .. })));
    }

    #[test]
    fn report_csv() {
        let p = hand_path();
        let rep = DecompositionReport::compute(&p, 1.0, Moment::Finite(1.0), 0.7).unwrap();
        assert!(rep.within_tolerance());
        let mut buf = Vec::new();
        DecompositionReport::write_csv(&[rep], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(DecompositionReport::CSV_HEADER));
        assert_eq!(text.lines().count(), 2);
    }
}
