//! Grid solver for the renewal equation `Z = z + Z * F` and the
//! residual-life generators it is fed with.
//!
//! The convolution is a Stieltjes integral against `F`, discretised with the
//! left-endpoint rule
//!
//! ```text
//! Z_k = z_k + Σ_{j=1}^{k} Z_{k-j} (F(jΔ) - F((j-1)Δ))
//! ```
//!
//! and solved forward in `k`. Point masses of `F` are placed on the nearest
//! grid index (never index 0).

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::lifetimes::{LifetimeDistribution, Moment};
use crate::numeric::KahanSum;

/// Atoms further than this from a grid point produce a [`SnapWarning`].
pub const SNAP_TOL: f64 = 1e-9;

/// Number of grid steps used when no step is given.
pub const DEFAULT_GRID_POINTS: usize = 10_000;

/// Grid step used by [`cumulative_residual_bias`].
pub const BIAS_STEP: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("step must be finite and > 0, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon must be finite and > 0, got {0}")]
    NonPositiveHorizon(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid function: {0}")]
    InvalidGrid(String),
    #[error("{0} diverges for this distribution")]
    Divergent(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Values `f(kΔ)` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    step: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self, SolverError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(SolverError::NonPositiveStep(step));
        }
        if values.len() < 2 {
            return Err(SolverError::InvalidGrid("need at least two grid points".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::InvalidGrid(format!("value at index {k} is not finite")));
        }
        Ok(Self { step, values })
    }

    /// Samples `f` at `kΔ` for `k = 0..=intervals`.
    pub fn sample(step: f64, intervals: usize, f: impl Fn(f64) -> f64) -> Result<Self, SolverError> {
        Self::new(step, (0..=intervals).map(|k| f(k as f64 * step)).collect())
    }

    pub fn constant(step: f64, intervals: usize, c: f64) -> Result<Self, SolverError> {
        Self::new(step, vec![c; intervals + 1])
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of intervals `K`.
    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.intervals() as f64 * self.step
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Value at the grid point nearest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = (t / self.step).round().clamp(0.0, self.intervals() as f64) as usize;
        self.values[k]
    }

    /// `sup_k |f(kΔ) - g(kΔ)|`.
    pub fn sup_distance(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| (v - g(self.time(k))).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        let values = self.values.iter().enumerate().map(|(k, &v)| f(self.time(k), v)).collect();
        GridFunction { step: self.step, values }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.time(k), v)?;
        }
        Ok(())
    }

    /// Reads the format written by [`GridFunction::write_csv`]. The times
    /// must start at 0 and be uniformly spaced.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SolverError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 {
                if line != "t,value" {
                    return Err(SolverError::Parse { line: 1, message: format!("expected header `t,value`, got `{line}`") });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64, SolverError> {
                s.ok_or_else(|| SolverError::Parse { line: i + 1, message: "expected two columns".into() })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| SolverError::Parse { line: i + 1, message: e.to_string() })
            };
            let mut cols = line.split(',');
            times.push(parse(cols.next())?);
            values.push(parse(cols.next())?);
            if cols.next().is_some() {
                return Err(SolverError::Parse { line: i + 1, message: "expected two columns".into() });
            }
        }
        if times.len() < 2 {
            return Err(SolverError::InvalidGrid("need at least two grid points".into()));
        }
        if times[0] != 0.0 {
            return Err(SolverError::InvalidGrid("grid must start at t = 0".into()));
        }
        let step = times[1];
        for (k, t) in times.iter().enumerate() {
            if (t - k as f64 * step).abs() > 1e-9 * step.max(k as f64 * step) {
                return Err(SolverError::InvalidGrid(format!("time at row {k} is off the uniform grid")));
            }
        }
        Self::new(step, values)
    }
}

/// An atom of `F` that does not sit on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapWarning {
    pub location: f64,
    pub snapped_to: f64,
}

impl std::fmt::Display for SnapWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "atom at {} snapped to grid point {}", self.location, self.snapped_to)
    }
}

/// Increments `dF_j = F(jΔ) - F((j-1)Δ)` for `j = 0..=intervals` (`dF_0 = 0`).
pub fn kernel_increments(dist: &LifetimeDistribution, step: f64, intervals: usize) -> (Vec<f64>, Vec<SnapWarning>) {
    let mut df = vec![0.0; intervals + 1];
    let mut prev = dist.continuous_tail(0.0);
    for (j, slot) in df.iter_mut().enumerate().skip(1) {
        let next = dist.continuous_tail(j as f64 * step);
        *slot = prev - next;
        prev = next;
    }
    let mut warnings = Vec::new();
    for (x, p) in dist.atoms() {
        let j = ((x / step).round() as usize).max(1);
        let snapped = j as f64 * step;
        if (snapped - x).abs() > SNAP_TOL {
            warnings.push(SnapWarning { location: x, snapped_to: snapped });
        }
        if j <= intervals {
            df[j] += p;
        }
    }
    (df, warnings)
}

/// Grid solution of the renewal equation with any atom-snapping warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalSolution {
    pub solution: GridFunction,
    pub warnings: Vec<SnapWarning>,
}

/// `Δ = horizon / 10^4`.
pub fn default_step(horizon: f64) -> f64 {
    horizon / DEFAULT_GRID_POINTS as f64
}

fn grid_intervals(horizon: f64, step: f64) -> Result<usize, SolverError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(SolverError::NonPositiveStep(step));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SolverError::NonPositiveHorizon(horizon));
    }
    let k = (horizon / step).round();
    if k < 1.0 || (k * step - horizon).abs() > 1e-9 * horizon {
        return Err(SolverError::GridMismatch(format!("horizon {horizon} is not a multiple of step {step}")));
    }
    Ok(k as usize)
}

/// Solves `Z = z + Z * F` on `[0, horizon]` with step `Δ`.
pub fn solve_renewal_equation(
    generator: &GridFunction,
    dist: &LifetimeDistribution,
    horizon: f64,
    step: f64,
) -> Result<RenewalSolution, SolverError> {
    let k_max = grid_intervals(horizon, step)?;
    if (generator.step() - step).abs() > 1e-12 * step {
        return Err(SolverError::GridMismatch(format!(
            "generator step {} differs from solver step {step}",
            generator.step()
        )));
    }
    if generator.intervals() != k_max {
        return Err(SolverError::GridMismatch(format!(
            "generator has {} intervals, solver grid has {k_max}",
            generator.intervals()
        )));
    }
    let (df, warnings) = kernel_increments(dist, step, k_max);
    let z = generator.values();
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let conv: f64 = (1..=k).map(|j| out[k - j] * df[j]).sum();
        out.push(z[k] + conv);
    }
    Ok(RenewalSolution { solution: GridFunction::new(step, out)?, warnings })
}

/// `z(t) = E[(T - t)^+]`, the generator whose solution is `E[R(t)]`.
pub fn generator_residual_mean(dist: &LifetimeDistribution, t: f64) -> f64 {
    dist.excess_mean(t)
}

/// `z_2(t) = E[((T - t)^+)^2] = ∫_t^∞ 2 (x - t) P(T > x) dx`, whose solution
/// is `E[R(t)^2]`.
pub fn generator_residual_second(dist: &LifetimeDistribution, t: f64) -> Result<f64, SolverError> {
    dist.excess_second_moment(t)
        .finite()
        .ok_or(SolverError::Divergent("second moment of the residual generator"))
}

/// `h(t) = ∫_0^t z_2(u) du`.
pub fn h_function(dist: &LifetimeDistribution, t: f64) -> Result<f64, SolverError> {
    dist.integrated_excess_second_moment(t)
        .finite()
        .ok_or(SolverError::Divergent("integral of z_2"))
}

/// `λ ∫_0^t z(u) du`, the asymptote of `E[R(t)]` when `E[T^2] = ∞`.
pub fn sgibnev_asymptote(dist: &LifetimeDistribution, t: f64) -> f64 {
    dist.rate() * dist.integrated_excess_mean(t)
}

/// Which residual-life generator to solve with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    One,
    Zero,
    ResidualMean,
    ResidualSecond,
}

pub fn generator_grid(
    generator: Generator,
    dist: &LifetimeDistribution,
    horizon: f64,
    step: f64,
) -> Result<GridFunction, SolverError> {
    let k = grid_intervals(horizon, step)?;
    match generator {
        Generator::One => GridFunction::constant(step, k, 1.0),
        Generator::Zero => GridFunction::constant(step, k, 0.0),
        Generator::ResidualMean => GridFunction::sample(step, k, |t| generator_residual_mean(dist, t)),
        Generator::ResidualSecond => {
            if !dist.excess_second_moment(0.0).is_finite() {
                return Err(SolverError::Divergent("second moment of the residual generator"));
            }
            GridFunction::sample(step, k, |t| generator_residual_second(dist, t).unwrap_or(f64::NAN))
        }
    }
}

/// Grid approximation of `E[R(t)]`.
pub fn mean_residual_on_grid(dist: &LifetimeDistribution, horizon: f64, step: f64) -> Result<RenewalSolution, SolverError> {
    let z = generator_grid(Generator::ResidualMean, dist, horizon, step)?;
    solve_renewal_equation(&z, dist, horizon, step)
}

/// Grid approximation of `var R(t) = E[R^2(t)] - E[R(t)]^2`.
pub fn residual_variance_on_grid(dist: &LifetimeDistribution, horizon: f64, step: f64) -> Result<GridFunction, SolverError> {
    let z2 = generator_grid(Generator::ResidualSecond, dist, horizon, step)?;
    let second = solve_renewal_equation(&z2, dist, horizon, step)?.solution;
    let first = mean_residual_on_grid(dist, horizon, step)?.solution;
    Ok(second.map(|t, s| s - first.at(t).powi(2)))
}

/// Limit of the discrete solution with generator `z`,
/// `Σ_k z(kΔ) / Σ_k P(T > kΔ)`, with the sums closed by their integral tails.
fn discrete_residual_limit(dist: &LifetimeDistribution, step: f64, min_intervals: usize) -> Result<f64, SolverError> {
    let z2_inf = dist.excess_second_moment(0.0);
    if !z2_inf.is_finite() {
        return Err(SolverError::Divergent("second moment"));
    }
    let far = ((1000.0 * dist.mean() / step).ceil() as usize).max(min_intervals);
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for k in 0..far {
        let x = k as f64 * step;
        num.add(dist.excess_mean(x));
        den.add(dist.tail(x));
    }
    let x_far = far as f64 * step;
    let z2_far = match dist.excess_second_moment(x_far) {
        Moment::Finite(v) => v,
        Moment::Infinite => return Err(SolverError::Divergent("second moment")),
    };
    num.add(0.5 * z2_far / step);
    den.add(dist.excess_mean(x_far) / step);
    Ok(num.value() / den.value())
}

/// `∫_0^t (E[R(u)] - C) du` with `E[R(u)]` from the grid solver at step
/// [`BIAS_STEP`] (shrunk so it divides `t`). `C` is the limit of the
/// discrete solution, which tends to `λ E[T^2] / 2` as the step vanishes.
pub fn cumulative_residual_bias(dist: &LifetimeDistribution, t: f64) -> Result<f64, SolverError> {
    if !dist.excess_second_moment(0.0).is_finite() {
        return Err(SolverError::Divergent("second moment"));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(SolverError::NonPositiveHorizon(t));
    }
    let k = (t / BIAS_STEP).ceil().max(1.0);
    let step = t / k;
    let solution = mean_residual_on_grid(dist, t, step)?.solution;
    let c = discrete_residual_limit(dist, step, solution.intervals())?;
    let v = solution.values();
    let integral: KahanSum = v.windows(2).map(|w| 0.5 * (w[0] + w[1]) - c).collect();
    Ok(integral.value() * step)
}
