//! Simulation and numerical analysis of counting processes.
//!
//! The crate is organised around five layers:
//!
//! * [`lifetimes`]: parametric inter-arrival laws with exact tails, partial
//!   moments and seeded samplers.
//! * [`processes`]: plain, delayed, Markov-modulated and moving-average
//!   (stationary sequence) counting processes, simulated as event lists.
//! * [`decomposition`]: pathwise martingale decompositions of a sample path
//!   and their exact identities.
//! * [`renewal_solver`]: a grid solver for `Z = z + Z * F` together with the
//!   residual-life generators and their asymptotes.
//! * [`asymptotics`]: Monte Carlo estimators with batch-means standard errors
//!   and the closed-form limit constants they are compared against.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod decomposition;
pub mod lifetimes;
pub mod numeric;
pub mod processes;
pub mod renewal_solver;

pub use asymptotics::{Estimate, MonteCarlo};
pub use decomposition::{ConditionalMeanOracle, DecompositionReport, SpecOracle};
pub use lifetimes::{LifetimeDistribution, LifetimeError, Moment};
pub use processes::{Delay, ProcessError, ProcessSpec, SamplePath, SimulationOptions};
pub use renewal_solver::GridFunction;
