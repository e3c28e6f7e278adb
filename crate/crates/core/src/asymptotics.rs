//! Monte Carlo estimators for the limit theorems and the closed-form
//! constants they converge to.
//!
//! Replication `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `i`, replications run on a dedicated rayon pool and are collected in
//! index order, so every estimate is a pure function of
//! `(spec, knobs, reps, seed)` regardless of the thread count. Standard
//! errors come from batch means: the statistic is recomputed on contiguous
//! batches of replications and the spread of the batch values is scaled by
//! `sqrt(batch size / reps)`.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::lifetimes::{LifetimeDistribution, Moment};
use crate::numeric::{lattice_span, KahanSum};
use crate::processes::{simulate_path_with, ProcessError, ProcessSpec, SamplePath, SimulationOptions};
use crate::renewal_solver::{mean_residual_on_grid, SolverError};

pub const DEFAULT_BATCHES: usize = 100;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
/// Blackwell estimates need at least this many replications.
pub const MIN_BLACKWELL_REPS: usize = 1000;
/// Slack added to the `1.95 / sqrt(n)` KS threshold for pre-asymptotic bias.
pub const KS_BIAS_ALLOWANCE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0} requires a finite moment of order {1}")]
    InfiniteMoment(&'static str, u32),
    #[error("modulating kernel is reducible")]
    ReducibleKernel,
    #[error("{0}")]
    Unsupported(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}

fn finite_moment(d: &LifetimeDistribution, k: u32, what: &'static str) -> Result<f64, AsymptoticsError> {
    d.upper_partial_moment(k, 0.0).finite().ok_or(AsymptoticsError::InfiniteMoment(what, k))
}

/// A Monte Carlo point estimate with its sampling uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
    pub confidence: f64,
    pub ci: (f64, f64),
    pub seed: u64,
    pub threads: usize,
    /// Hypotheses of the target limit that the process spec violates.
    pub flags: Vec<String>,
}

impl Estimate {
    /// `(estimate - target) / std_error`; 0 when both vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.estimate - target;
        if diff == 0.0 {
            0.0
        } else if self.std_error == 0.0 {
            diff.signum() * f64::INFINITY
        } else {
            diff / self.std_error
        }
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        self.z_score(target).abs() <= k
    }
}

/// Replication engine.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub reps: usize,
    pub seed: u64,
    pub threads: usize,
    pub batches: usize,
    pub confidence: f64,
    pub options: SimulationOptions,
}

impl MonteCarlo {
    pub fn new(reps: usize, seed: u64) -> Self {
        let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Self {
            reps,
            seed,
            threads,
            batches: DEFAULT_BATCHES,
            confidence: DEFAULT_CONFIDENCE,
            options: SimulationOptions::default(),
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    /// Generator for replication `index`.
    pub fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Runs `f` once per replication and returns the results in index order.
    pub fn replicate<T, E, F>(&self, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send + From<AsymptoticsError>,
        F: Fn(usize, &mut ChaCha8Rng) -> Result<T, E> + Sync,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.max(1))
            .build()
            .map_err(|e| E::from(AsymptoticsError::ThreadPool(e.to_string())))?;
        pool.install(|| {
            (0..self.reps)
                .into_par_iter()
                .map(|i| {
                    let mut rng = self.rng(i);
                    f(i, &mut rng)
                })
                .collect()
        })
    }

    /// Simulates one path per replication and maps it to a sample.
    pub fn replicate_paths<T, F>(&self, spec: &ProcessSpec, horizon: f64, f: F) -> Result<Vec<T>, AsymptoticsError>
    where
        T: Send,
        F: Fn(&SamplePath) -> Result<T, AsymptoticsError> + Sync,
    {
        spec.validate()?;
        self.replicate(|_, rng| {
            let path = simulate_path_with(spec, horizon, rng, &self.options)?;
            f(&path)
        })
    }

    /// Applies `statistic` to all samples for the point estimate and to
    /// contiguous batches for the standard error.
    pub fn estimate_statistic<T>(&self, samples: &[T], statistic: impl Fn(&[T]) -> f64) -> Estimate {
        let n = samples.len();
        let estimate = statistic(samples);
        let b = self.batches.min(n / 2).max(1);
        let std_error = if b < 2 {
            0.0
        } else {
            let size = n / b;
            let values: Vec<f64> = (0..b)
                .map(|i| {
                    let end = if i + 1 == b { n } else { (i + 1) * size };
                    statistic(&samples[i * size..end])
                })
                .collect();
            let mean = values.iter().sum::<f64>() / b as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
            (var / b as f64).sqrt()
        };
        let z = Normal::new(0.0, 1.0)
            .expect("standard normal")
            .inverse_cdf(0.5 + 0.5 * self.confidence);
        Estimate {
            estimate,
            std_error,
            reps: n,
            confidence: self.confidence,
            ci: (estimate - z * std_error, estimate + z * std_error),
            seed: self.seed,
            threads: self.threads,
            flags: Vec::new(),
        }
    }

    pub fn estimate_mean(&self, samples: &[f64]) -> Estimate {
        self.estimate_statistic(samples, mean)
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().copied().collect::<KahanSum>().value() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).collect::<KahanSum>().value() / (x.len() as f64 - 1.0)
}

/// Long-run event rate of a spec.
pub fn long_run_rate(spec: &ProcessSpec) -> Result<f64, AsymptoticsError> {
    match spec {
        ProcessSpec::Plain { lifetime } | ProcessSpec::Delayed { lifetime, .. } => Ok(lifetime.rate()),
        ProcessSpec::Modulated { .. } => modulated_rate(spec),
        ProcessSpec::StationaryMa { base, .. } => Ok(base.rate()),
    }
}

/// Span of the lattice carrying every inter-arrival time, if any.
pub fn spec_arithmetic_span(spec: &ProcessSpec) -> Option<f64> {
    match spec {
        ProcessSpec::Plain { lifetime } | ProcessSpec::Delayed { lifetime, .. } => lifetime.arithmetic_span(),
        ProcessSpec::Modulated { lifetimes, .. } => {
            let spans: Option<Vec<f64>> = lifetimes.values().map(|d| d.arithmetic_span()).collect();
            lattice_span(&spans?)
        }
        ProcessSpec::StationaryMa { m, base } => base.arithmetic_span().map(|s| s / *m as f64),
    }
}

fn arithmetic_flags(spec: &ProcessSpec) -> Vec<String> {
    spec_arithmetic_span(spec)
        .map(|s| vec![format!("non-arithmetic hypothesis violated: inter-arrivals live on a lattice of span {s}")])
        .unwrap_or_default()
}

/// Estimate of `E[N(t+h) - N(t)]` and its limit `λ h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetedEstimate {
    pub estimate: Estimate,
    pub target: f64,
}

pub fn estimate_blackwell(mc: &MonteCarlo, spec: &ProcessSpec, t: f64, h: f64) -> Result<TargetedEstimate, AsymptoticsError> {
    if !(t > 0.0 && h > 0.0) {
        return Err(AsymptoticsError::InvalidArgument(format!("need t > 0 and h > 0, got t={t}, h={h}")));
    }
    if mc.reps < MIN_BLACKWELL_REPS {
        return Err(AsymptoticsError::InvalidArgument(format!(
            "Blackwell estimates need at least {MIN_BLACKWELL_REPS} replications"
        )));
    }
    let target = long_run_rate(spec)? * h;
    let samples = mc.replicate_paths(spec, t + h, |p| Ok((p.count(t + h)? - p.count(t)?) as f64))?;
    let mut estimate = mc.estimate_mean(&samples);
    estimate.flags = arithmetic_flags(spec);
    Ok(TargetedEstimate { estimate, target })
}

/// Estimate of `E[N(t)] / t` with target `λ`.
pub fn estimate_rate(mc: &MonteCarlo, spec: &ProcessSpec, t: f64) -> Result<TargetedEstimate, AsymptoticsError> {
    if !(t > 0.0) {
        return Err(AsymptoticsError::InvalidArgument(format!("need t > 0, got {t}")));
    }
    let target = long_run_rate(spec)?;
    let samples = mc.replicate_paths(spec, t, |p| Ok(p.count(t)? as f64 / t))?;
    Ok(TargetedEstimate { estimate: mc.estimate_mean(&samples), target })
}

/// Kolmogorov-Smirnov distance between samples and a continuous CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub threshold: f64,
    pub reps: usize,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.statistic < self.threshold
    }
}

/// KS distance between the law of `R(t)` over replications and the
/// equilibrium law of the lifetime.
pub fn residual_limit_ks(mc: &MonteCarlo, spec: &ProcessSpec, t: f64) -> Result<KsResult, AsymptoticsError> {
    let lifetime = match spec {
        ProcessSpec::Plain { lifetime } | ProcessSpec::Delayed { lifetime, .. } => lifetime,
        _ => {
            return Err(AsymptoticsError::Unsupported(
                "residual law check needs a plain or delayed renewal spec".into(),
            ))
        }
    };
    if let Some(span) = lifetime.arithmetic_span() {
        return Err(AsymptoticsError::Unsupported(format!(
            "residual life has no limit law for an arithmetic lifetime (span {span})"
        )));
    }
    let mut samples = mc.replicate_paths(spec, t, |p| Ok(p.residual(t)?))?;
    let statistic = ks_statistic(&mut samples, |x| lifetime.equilibrium_cdf(x));
    let n = samples.len();
    Ok(KsResult { statistic, threshold: 1.95 / (n as f64).sqrt() + KS_BIAS_ALLOWANCE, reps: n })
}

/// `-2/3 λ^3 E[T^3] + 5/4 λ^4 E[T^2]^2 - 1/2 λ^2 E[T^2]`, the limit of
/// `var N(t) - λ^3 σ^2 t`.
pub fn smith_constant(dist: &LifetimeDistribution) -> Result<f64, AsymptoticsError> {
    let m2 = finite_moment(dist, 2, "variance constant")?;
    let m3 = finite_moment(dist, 3, "variance constant")?;
    let l = dist.rate();
    Ok(-2.0 / 3.0 * l.powi(3) * m3 + 1.25 * l.powi(4) * m2 * m2 - 0.5 * l * l * m2)
}

fn plain_lifetime<'a>(spec: &'a ProcessSpec, what: &str) -> Result<&'a LifetimeDistribution, AsymptoticsError> {
    match spec {
        ProcessSpec::Plain { lifetime } => Ok(lifetime),
        _ => Err(AsymptoticsError::Unsupported(format!("{what} is defined for plain renewal specs"))),
    }
}

/// Estimate of `var N(t) - λ^3 σ^2 t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceDrift {
    pub estimate: Estimate,
    /// The variance constant when `E[T^3] < ∞`.
    pub target: Option<f64>,
    /// `t sqrt(z_2(t))`, the order of the drift when `E[T^3] = ∞`.
    pub order_bound: f64,
}

pub fn estimate_variance_drift(mc: &MonteCarlo, spec: &ProcessSpec, t: f64) -> Result<VarianceDrift, AsymptoticsError> {
    let lifetime = plain_lifetime(spec, "variance drift")?;
    let sigma2 = lifetime.variance().finite().ok_or(AsymptoticsError::InfiniteMoment("variance drift", 2))?;
    let lambda = lifetime.rate();
    let linear = lambda.powi(3) * sigma2 * t;
    let samples = mc.replicate_paths(spec, t, |p| Ok(p.count(t)? as f64))?;
    let estimate = mc.estimate_statistic(&samples, |x| variance(x) - linear);
    let z2 = lifetime.excess_second_moment(t).finite().unwrap_or(f64::INFINITY);
    Ok(VarianceDrift { estimate, target: smith_constant(lifetime).ok(), order_bound: t * z2.sqrt() })
}

/// `½(λ E[T^2] - λ^2 E[T^3]) + ½ λ^3 σ^2 E[T^2]`, the limit of `E[R(t) M(t)]`.
pub fn rm_cross_limit(dist: &LifetimeDistribution) -> Result<f64, AsymptoticsError> {
    let m2 = finite_moment(dist, 2, "cross limit")?;
    let m3 = finite_moment(dist, 3, "cross limit")?;
    let l = dist.rate();
    let sigma2 = (m2 - 1.0 / (l * l)).max(0.0);
    Ok(0.5 * (l * m2 - l * l * m3) + 0.5 * l.powi(3) * sigma2 * m2)
}

pub fn estimate_rm_cross(mc: &MonteCarlo, spec: &ProcessSpec, t: f64) -> Result<TargetedEstimate, AsymptoticsError> {
    let lifetime = plain_lifetime(spec, "cross moment")?;
    let target = rm_cross_limit(lifetime)?;
    let lambda = lifetime.rate();
    let samples = mc.replicate_paths(spec, t, |p| {
        let r = p.residual(t)?;
        let n = p.count(t)?;
        let m: KahanSum = (1..=n).map(|k| 1.0 - lambda * p.inter_arrival(k)).collect();
        Ok(r * m.value())
    })?;
    let mut estimate = mc.estimate_mean(&samples);
    estimate.flags = arithmetic_flags(spec);
    Ok(TargetedEstimate { estimate, target })
}

fn reachable_from(kernel: &[Vec<f64>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; kernel.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for (j, &p) in kernel[i].iter().enumerate() {
            if p > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Stationary law of an irreducible row-stochastic matrix.
pub fn stationary_distribution(kernel: &[Vec<f64>]) -> Result<Vec<f64>, AsymptoticsError> {
    let k = kernel.len();
    if (0..k).any(|i| reachable_from(kernel, i).iter().any(|r| !r)) {
        return Err(AsymptoticsError::ReducibleKernel);
    }
    // Solve π (P - I) = 0 with the last equation replaced by Σ π = 1.
    let mut a = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(j, i)] = kernel[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| AsymptoticsError::InvalidArgument("singular stationary system".into()))?;
    Ok(pi.iter().map(|x| x.max(0.0)).collect())
}

/// `λ = Σ_x π̃(x) / m(x) = 1 / Σ_x π(x) m(x)` with `π` the stationary law
/// of the embedded chain, `m(x)` the mean holding time in state `x` and
/// `π̃ ∝ π m` the time-stationary state law.
pub fn modulated_rate(spec: &ProcessSpec) -> Result<f64, AsymptoticsError> {
    let plan = spec.resolve_modulation()?;
    let pi = stationary_distribution(plan.kernel)?;
    let cycle: f64 = pi.iter().zip(&plan.lifetimes).map(|(p, d)| p * d.mean()).sum();
    if !(cycle > 0.0) {
        return Err(AsymptoticsError::InvalidArgument("mean holding time is zero".into()));
    }
    Ok(1.0 / cycle)
}

/// Variance of `n^{-1/2}(N(nt) - λ n t)` and mean of `λ R(nt) / sqrt(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionEstimate {
    pub variance: Estimate,
    pub variance_target: f64,
    pub residual_mean: Estimate,
}

pub fn diffusion_scaling(mc: &MonteCarlo, spec: &ProcessSpec, n: f64, t: f64) -> Result<DiffusionEstimate, AsymptoticsError> {
    let lifetime = plain_lifetime(spec, "diffusion scaling")?;
    let sigma2 = lifetime.variance().finite().ok_or(AsymptoticsError::InfiniteMoment("diffusion scaling", 2))?;
    if !(n > 0.0 && t > 0.0) {
        return Err(AsymptoticsError::InvalidArgument(format!("need n > 0 and t > 0, got n={n}, t={t}")));
    }
    let lambda = lifetime.rate();
    let horizon = n * t;
    let scale = n.sqrt();
    let samples = mc.replicate_paths(spec, horizon, |p| {
        let centred = (p.count(horizon)? as f64 - lambda * horizon) / scale;
        Ok((centred, lambda * p.residual(horizon)? / scale))
    })?;
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok(DiffusionEstimate {
        variance: mc.estimate_statistic(&x, variance),
        variance_target: lambda.powi(3) * sigma2 * t,
        residual_mean: mc.estimate_mean(&y),
    })
}

/// Means of `[M](t)`, `⟨M⟩(t)` and `M(t)^2` and their pairwise differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticVariation {
    pub optional: Estimate,
    pub predictable: Estimate,
    pub square: Estimate,
    pub optional_minus_predictable: Estimate,
    pub optional_minus_square: Estimate,
    pub predictable_minus_square: Estimate,
    /// `λ^3 σ^2 (t + E[R(t)])`, with `E[R(t)]` from the grid solver.
    pub target: f64,
}

pub fn estimate_quadratic_variation(
    mc: &MonteCarlo,
    spec: &ProcessSpec,
    t: f64,
) -> Result<QuadraticVariation, AsymptoticsError> {
    let lifetime = plain_lifetime(spec, "quadratic variation")?;
    let sigma2 = match lifetime.variance() {
        Moment::Finite(s) => s,
        Moment::Infinite => return Err(AsymptoticsError::InfiniteMoment("quadratic variation", 2)),
    };
    let lambda = lifetime.rate();
    let samples = mc.replicate_paths(spec, t, |p| {
        let n = p.count(t)?;
        let mut m = KahanSum::new();
        let mut qv = KahanSum::new();
        for k in 1..=n {
            let x = 1.0 - lambda * p.inter_arrival(k);
            m.add(x);
            qv.add(x * x);
        }
        let m = m.value();
        Ok([qv.value(), lambda * lambda * sigma2 * n as f64, m * m])
    })?;
    let column = |f: &dyn Fn(&[f64; 3]) -> f64| -> Vec<f64> { samples.iter().map(f).collect() };
    let step = (t / 1e4).min(1e-2);
    let intervals = (t / step).ceil();
    let mean_r = mean_residual_on_grid(lifetime, t, t / intervals)?.solution;
    let er = mean_r.values()[mean_r.intervals()];
    Ok(QuadraticVariation {
        optional: mc.estimate_mean(&column(&|s| s[0])),
        predictable: mc.estimate_mean(&column(&|s| s[1])),
        square: mc.estimate_mean(&column(&|s| s[2])),
        optional_minus_predictable: mc.estimate_mean(&column(&|s| s[0] - s[1])),
        optional_minus_square: mc.estimate_mean(&column(&|s| s[0] - s[2])),
        predictable_minus_square: mc.estimate_mean(&column(&|s| s[1] - s[2])),
        target: lambda.powi(3) * sigma2 * (t + er),
    })
}

/// Estimate of `E[λ̃(t) 1(R(t) <= v)]`, which tends to the long-run rate.
pub fn estimate_truncated_rate(
    mc: &MonteCarlo,
    spec: &ProcessSpec,
    v: f64,
    t: f64,
) -> Result<TargetedEstimate, AsymptoticsError> {
    use crate::decomposition::{truncated_lambda, SpecOracle};
    let oracle = SpecOracle::new(spec)?;
    let target = long_run_rate(spec)?;
    let samples = mc.replicate_paths(spec, t, |p| {
        if p.residual(t)? <= v {
            truncated_lambda(p, &oracle, v, t).map_err(|e| AsymptoticsError::InvalidArgument(e.to_string()))
        } else {
            Ok(0.0)
        }
    })?;
    Ok(TargetedEstimate { estimate: mc.estimate_mean(&samples), target })
}
