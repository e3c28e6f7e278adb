//! Dispatches a validated config to the library and writes its artifacts.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use renewkit::asymptotics::{
    diffusion_scaling, estimate_blackwell, estimate_rate, estimate_rm_cross, estimate_variance_drift,
    long_run_rate, residual_limit_ks, AsymptoticsError,
};
use renewkit::decomposition::{check_identity, tol_path, truncated_identity, DecompositionError};
use renewkit::lifetimes::Family;
use renewkit::processes::simulate_path_with;
use renewkit::renewal_solver::{
    generator_grid, mean_residual_on_grid, sgibnev_asymptote, solve_renewal_equation, SolverError,
};
use renewkit::{DecompositionReport, LifetimeDistribution, Moment, MonteCarlo, ProcessError, ProcessSpec, SpecOracle};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, GeneratorName};
use crate::report::{num, spec_hash, write_summary, Check, RunKey, Status};

/// Standard errors allowed between an estimate and its target.
pub const Z_TOLERANCE: f64 = 4.0;
/// Relative band for the diffusion variance and the asymptote ratio.
pub const RELATIVE_BAND: f64 = 0.1;
/// Query times per path for `decompose`.
pub const DECOMPOSE_TIMES: usize = 100;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    EventCap(String),
    #[error("{0}")]
    Runtime(String),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::EventCap(_) => 3,
            RunError::Runtime(_) | RunError::Io { .. } => 1,
        }
    }
}

impl From<ProcessError> for RunError {
    fn from(e: ProcessError) -> Self {
        match e {
            ProcessError::EventCapExceeded { .. } => RunError::EventCap(e.to_string()),
            ProcessError::InvalidSpec(_) | ProcessError::Lifetime(_) => ConfigError::Spec(e.to_string()).into(),
            _ => RunError::Runtime(e.to_string()),
        }
    }
}

impl From<AsymptoticsError> for RunError {
    fn from(e: AsymptoticsError) -> Self {
        match e {
            AsymptoticsError::Process(p) => p.into(),
            AsymptoticsError::Solver(s) => s.into(),
            AsymptoticsError::InfiniteMoment(..)
            | AsymptoticsError::ReducibleKernel
            | AsymptoticsError::Unsupported(_)
            | AsymptoticsError::InvalidArgument(_) => ConfigError::Unsupported(e.to_string()).into(),
            AsymptoticsError::ThreadPool(_) => RunError::Runtime(e.to_string()),
        }
    }
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NonPositiveStep(_)
            | SolverError::NonPositiveHorizon(_)
            | SolverError::GridMismatch(_)
            | SolverError::Divergent(_) => ConfigError::Unsupported(e.to_string()).into(),
            _ => RunError::Runtime(e.to_string()),
        }
    }
}

impl From<DecompositionError> for RunError {
    fn from(e: DecompositionError) -> Self {
        match e {
            DecompositionError::Process(p) => p.into(),
            DecompositionError::InvalidTruncation(_) | DecompositionError::InfiniteSecondMoment(_) => {
                ConfigError::Unsupported(e.to_string()).into()
            }
            _ => RunError::Runtime(e.to_string()),
        }
    }
}

/// Checks and files produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub experiment: ExperimentKind,
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    /// True iff no check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks.iter().map(|c| c.line(self.experiment.name())).collect()
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), RunError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|source| RunError::Io { path: path.clone(), source })?;
        self.files.push(path.clone());
        Ok((path, BufWriter::new(file)))
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), RunError> {
        let (path, mut w) = self.create(name)?;
        body(&mut w).and_then(|_| w.flush()).map_err(|source| RunError::Io { path, source })
    }
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    hash: String,
    mc: MonteCarlo,
    artifacts: Artifacts,
}

fn required<T: Copy>(value: Option<T>, field: &'static str, kind: ExperimentKind) -> Result<T, RunError> {
    value.ok_or(RunError::Config(ConfigError::Missing { field, kind }))
}

fn plain_lifetime(spec: &ProcessSpec) -> &LifetimeDistribution {
    match spec {
        ProcessSpec::Plain { lifetime } => lifetime,
        _ => unreachable!("validated as plain"),
    }
}

fn renewal_sigma2(spec: &ProcessSpec) -> Moment {
    match spec {
        ProcessSpec::Plain { lifetime } | ProcessSpec::Delayed { lifetime, .. } => lifetime.variance(),
        _ => Moment::Infinite,
    }
}

/// Validates, resolves defaults, runs the experiment and writes its CSVs.
pub fn run(config: &ExperimentConfig) -> Result<Outcome, RunError> {
    config.validate()?;
    let config = config.resolved();
    let kind = config.experiment;
    let dir = config.out.clone().expect("resolved");
    fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
    let mut mc = MonteCarlo::new(config.reps.unwrap_or(1), config.seed).with_threads(config.threads.unwrap_or(1));
    if let Some(cap) = config.max_events {
        mc.options.max_events = cap;
    }
    let mut ctx = Context { config: &config, hash: spec_hash(&config.spec), mc, artifacts: Artifacts { dir, files: Vec::new() } };
    let checks = match kind {
        ExperimentKind::Simulate => simulate(&mut ctx)?,
        ExperimentKind::Decompose => decompose(&mut ctx)?,
        ExperimentKind::Blackwell | ExperimentKind::Modulated | ExperimentKind::Palm => blackwell(&ctx)?,
        ExperimentKind::Rate => rate(&ctx)?,
        ExperimentKind::ResidualLaw => residual_law(&ctx)?,
        ExperimentKind::Variance => variance(&ctx)?,
        ExperimentKind::RmCross => rm_cross(&ctx)?,
        ExperimentKind::RenewalSolve => renewal_solve(&mut ctx)?,
        ExperimentKind::Sgibnev => sgibnev(&mut ctx)?,
        ExperimentKind::Diffusion => diffusion(&ctx)?,
    };
    let key = RunKey {
        experiment: kind.name().into(),
        spec_hash: ctx.hash.clone(),
        seed: config.seed,
        reps: config.reps,
        t: config.t.or(config.horizon),
        h: config.h,
        v: config.v,
        n: config.n,
    };
    ctx.artifacts.write(&format!("{}.csv", kind.name()), |w| write_summary(&key, &checks, w))?;
    Ok(Outcome { experiment: kind, checks, artifacts: ctx.artifacts.files })
}

fn simulate(ctx: &mut Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let horizon = required(c.horizon, "horizon", c.experiment)?;
    let lambda = long_run_rate(&c.spec)?;
    let paths = ctx.mc.replicate(|_, rng| simulate_path_with(&c.spec, horizon, rng, &ctx.mc.options).map_err(RunError::from))?;
    let mut worst: f64 = 0.0;
    let mut events = 0usize;
    for (i, path) in paths.iter().enumerate() {
        let n = path.count(horizon)?;
        events += n;
        worst = worst.max(check_identity(path, lambda, horizon)?.abs() / tol_path(n));
        ctx.artifacts.write(&format!("simulate-{i}.ndjson"), |w| path.write_ndjson(w))?;
    }
    Ok(vec![Check {
        name: "identity".into(),
        status: Status::from_bool(worst <= 1.0),
        estimate: Some(worst),
        se: None,
        target: Some(1.0),
        z: None,
        detail: format!("{} path(s), {events} events by t = {horizon}; max |residual| / tol_path = {worst:.3e}", paths.len()),
    }])
}

fn decompose(ctx: &mut Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let t = required(c.t, "t", c.experiment)?;
    let mean_t = 1.0 / long_run_rate(&c.spec)?;
    let sigma2 = renewal_sigma2(&c.spec);
    let oracle = SpecOracle::new(&c.spec)?;
    let times: Vec<f64> = (0..=DECOMPOSE_TIMES).map(|k| t * k as f64 / DECOMPOSE_TIMES as f64).collect();
    let rows = ctx.mc.replicate(|_, rng| -> Result<Vec<(DecompositionReport, Option<f64>)>, RunError> {
        let path = simulate_path_with(&c.spec, t, rng, &ctx.mc.options)?;
        times
            .iter()
            .map(|&s| {
                let report = DecompositionReport::compute(&path, mean_t, sigma2, s)?;
                let truncated = c.v.map(|v| truncated_identity(&path, &oracle, v, s)).transpose()?;
                Ok((report, truncated))
            })
            .collect()
    })?;
    let mut worst: f64 = 0.0;
    let mut worst_truncated: f64 = 0.0;
    for (r, tr) in rows.iter().flatten() {
        worst = worst.max(r.identity_residual.abs() / tol_path(r.n));
        if let Some(x) = tr {
            worst_truncated = worst_truncated.max(x.abs() / tol_path(r.n));
        }
    }
    let (hash, seed) = (ctx.hash.clone(), c.seed);
    ctx.artifacts.write("decomposition.csv", |w| {
        writeln!(w, "spec_hash,seed,path,{},truncated_residual", DecompositionReport::CSV_HEADER)?;
        for (p, reports) in rows.iter().enumerate() {
            for (r, tr) in reports {
                writeln!(
                    w,
                    "{hash},{seed},{p},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{}",
                    r.t,
                    r.n,
                    r.r,
                    r.m,
                    r.drift,
                    r.identity_residual,
                    r.optional_qv,
                    num(r.predictable_qv),
                    r.wald_residual,
                    num(*tr)
                )?;
            }
        }
        Ok(())
    })?;
    let count = rows.len() * times.len();
    let mut checks = vec![Check {
        name: "identity".into(),
        status: Status::from_bool(worst <= 1.0),
        estimate: Some(worst),
        se: None,
        target: Some(1.0),
        z: None,
        detail: format!("max |identity_residual| / tol_path = {worst:.3e} over {count} evaluations"),
    }];
    if let Some(v) = c.v {
        checks.push(Check {
            name: "truncated-identity".into(),
            status: Status::from_bool(worst_truncated <= 1.0),
            estimate: Some(worst_truncated),
            se: None,
            target: Some(1.0),
            z: None,
            detail: format!("v = {v}: max |residual| / tol_path = {worst_truncated:.3e} over {count} evaluations"),
        });
    }
    Ok(checks)
}

fn blackwell(ctx: &Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let t = required(c.t, "t", c.experiment)?;
    let h = required(c.h, "h", c.experiment)?;
    let r = estimate_blackwell(&ctx.mc, &c.spec, t, h)?;
    Ok(vec![Check::within_se("blackwell", &r.estimate, r.target, Z_TOLERANCE)])
}

fn rate(ctx: &Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let t = required(c.t, "t", c.experiment)?;
    let r = estimate_rate(&ctx.mc, &c.spec, t)?;
    Ok(vec![Check::within_se("rate", &r.estimate, r.target, Z_TOLERANCE)])
}

fn residual_law(ctx: &Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let t = required(c.t, "t", c.experiment)?;
    let ks = residual_limit_ks(&ctx.mc, &c.spec, t)?;
    Ok(vec![Check {
        name: "ks".into(),
        status: Status::from_bool(ks.passes()),
        estimate: Some(ks.statistic),
        se: None,
        target: Some(ks.threshold),
        z: None,
        detail: format!("KS distance {:.5} vs threshold {:.5} over {} replications", ks.statistic, ks.threshold, ks.reps),
    }])
}

fn variance(ctx: &Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let t = required(c.t, "t", c.experiment)?;
    let r = estimate_variance_drift(&ctx.mc, &c.spec, t)?;
    Ok(vec![match r.target {
        Some(target) => Check::within_se("variance-drift", &r.estimate, target, Z_TOLERANCE),
        None => {
            let ratio = r.estimate.estimate.abs() / r.order_bound;
            Check {
                name: "variance-order".into(),
                status: Status::Note,
                estimate: Some(ratio),
                se: Some(r.estimate.std_error / r.order_bound),
                target: None,
                z: None,
                detail: format!(
                    "no finite limit; drift {:.4} ± {:.4}, |drift| / (t sqrt(z_2(t))) = {ratio:.4}",
                    r.estimate.estimate, r.estimate.std_error
                ),
            }
        }
    }])
}

fn rm_cross(ctx: &Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let t = required(c.t, "t", c.experiment)?;
    let r = estimate_rm_cross(&ctx.mc, &c.spec, t)?;
    Ok(vec![Check::within_se("rm-cross", &r.estimate, r.target, Z_TOLERANCE)])
}

/// Exact solution for exponential lifetimes and for the zero generator.
fn closed_form(generator: GeneratorName, lifetime: &LifetimeDistribution) -> Option<Box<dyn Fn(f64) -> f64>> {
    if generator == GeneratorName::Zero {
        return Some(Box::new(|_| 0.0));
    }
    let Family::Exponential { rate } = *lifetime.family() else {
        return None;
    };
    Some(match generator {
        GeneratorName::One => Box::new(move |t| 1.0 + rate * t),
        GeneratorName::ResidualMean => Box::new(move |_| 1.0 / rate),
        GeneratorName::ResidualSecond => Box::new(move |_| 2.0 / (rate * rate)),
        GeneratorName::Zero => unreachable!(),
    })
}

fn renewal_solve(ctx: &mut Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let horizon = required(c.horizon, "horizon", c.experiment)?;
    let generator = required(c.generator, "generator", c.experiment)?;
    let step = required(c.step, "step", c.experiment)?;
    let lifetime = plain_lifetime(&c.spec);
    let z = generator_grid(generator.into(), lifetime, horizon, step)?;
    let solved = solve_renewal_equation(&z, lifetime, horizon, step)?;
    for w in &solved.warnings {
        eprintln!("warning: {w}");
    }
    let grid = solved.solution;
    let (hash, seed) = (ctx.hash.clone(), c.seed);
    ctx.artifacts.write("renewal-solve-grid.csv", |w| {
        writeln!(w, "spec_hash,seed,t,value")?;
        for (k, v) in grid.values().iter().enumerate() {
            writeln!(w, "{hash},{seed},{:.16e},{v:.16e}", grid.time(k))?;
        }
        Ok(())
    })?;
    let check = match closed_form(generator, lifetime) {
        Some(exact) => {
            let rate = lifetime.rate();
            let scale = (0..=grid.intervals()).map(|k| exact(grid.time(k)).abs()).fold(0.0, f64::max);
            let tol = 0.5 * rate * step * (1.0 + scale);
            let err = grid.sup_distance(&*exact);
            Check {
                name: "closed-form".into(),
                status: Status::from_bool(err <= tol),
                estimate: Some(err),
                se: None,
                target: Some(tol),
                z: None,
                detail: format!("sup |Z - exact| = {err:.4e} vs tolerance {tol:.4e} at step {step}"),
            }
        }
        None => {
            let finite = grid.values().iter().all(|v| v.is_finite());
            let last = grid.values()[grid.intervals()];
            Check {
                name: "solution".into(),
                status: if finite { Status::Note } else { Status::Fail },
                estimate: Some(last),
                se: None,
                target: None,
                z: None,
                detail: format!("no closed form; Z({horizon}) = {last:.6} at step {step}"),
            }
        }
    };
    Ok(vec![check])
}

fn sgibnev(ctx: &mut Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let t = required(c.t, "t", c.experiment)?;
    let step = required(c.step, "step", c.experiment)?;
    let lifetime = plain_lifetime(&c.spec);
    let grid = mean_residual_on_grid(lifetime, t, step)?.solution;
    let (hash, seed) = (ctx.hash.clone(), c.seed);
    ctx.artifacts.write("sgibnev-grid.csv", |w| {
        writeln!(w, "spec_hash,seed,t,mean_residual,asymptote")?;
        for (k, v) in grid.values().iter().enumerate() {
            let s = grid.time(k);
            writeln!(w, "{hash},{seed},{s:.16e},{v:.16e},{:.16e}", sgibnev_asymptote(lifetime, s))?;
        }
        Ok(())
    })?;
    let value = grid.values()[grid.intervals()];
    let asymptote = sgibnev_asymptote(lifetime, t);
    let ratio = value / asymptote;
    Ok(vec![Check {
        name: "asymptote-ratio".into(),
        status: Status::from_bool((ratio - 1.0).abs() <= RELATIVE_BAND),
        estimate: Some(ratio),
        se: None,
        target: Some(1.0),
        z: None,
        detail: format!("E[R({t})] = {value:.6}, asymptote {asymptote:.6}, ratio {ratio:.5} (band ±{RELATIVE_BAND})"),
    }])
}

fn diffusion(ctx: &Context) -> Result<Vec<Check>, RunError> {
    let c = ctx.config;
    let t = required(c.t, "t", c.experiment)?;
    let n = required(c.n, "n", c.experiment)?;
    let d = diffusion_scaling(&ctx.mc, &c.spec, n, t)?;
    let v = d.variance.estimate;
    let target = d.variance_target;
    let relative_ok = (v - target).abs() <= RELATIVE_BAND * target;
    Ok(vec![
        Check {
            name: "variance".into(),
            status: Status::from_bool(relative_ok),
            estimate: Some(v),
            se: Some(d.variance.std_error),
            target: Some(target),
            z: Some(d.variance.z_score(target)),
            detail: format!("variance {v:.5} ± {:.5} vs {target} (band ±{RELATIVE_BAND} relative)", d.variance.std_error),
        },
        Check::within_se("residual-mean", &d.residual_mean, 0.0, Z_TOLERANCE),
    ])
}
