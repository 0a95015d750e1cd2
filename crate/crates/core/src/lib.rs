//! Smoothing hybrid variance-reduced SGD for stochastic compositional and
//! nonconvex-linear minimax problems
//!
//! ```text
//! min_x  φ0(E[F(x, ξ)]) + R(x),   φ0(u) = max_y ⟨u, Ky⟩ − ψ(y)
//! ```
//!
//! together with its parameter schedules, a restarting variant, approximate
//! KKT point recovery, two baseline methods and the portfolio and model
//! selection test problems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod estimators;
pub mod gradcheck;
pub mod kkt;
pub mod linalg;
pub mod metrics;
pub mod outer;
pub mod problem;
pub mod problems;
pub mod prox;
pub mod regularizer;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use estimators::{BatchPlan, BatchSampler, HybridEstimators, OracleCounters, StepBatches};
pub use outer::{DualFunction, MaxFormOuter, OuterFunction, SmoothOuter};
pub use problem::{CompositionProblem, ProblemConstants};
pub use regularizer::Regularizer;
pub use schedule::{Constants, ManualGamma, ManualSchedule, ScheduleState, ScheduleVariant};
pub use solver::{run, run_restart, IterRecord, RunRecord, SolverConfig};
