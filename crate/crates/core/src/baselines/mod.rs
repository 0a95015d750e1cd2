//! Comparison methods sharing the solver's oracle counters and metrics.

pub mod civr;
pub mod scg;

pub use civr::{run_civr, CivrConfig};
pub use scg::{run_scg, ScgConfig};

use std::time::Instant;

use crate::error::Result;
use crate::estimators::OracleCounters;
use crate::metrics::MetricsEvaluator;
use crate::outer::OuterFunction;
use crate::problem::CompositionProblem;
use crate::regularizer::Regularizer;
use crate::schedule::ManualGamma;
use crate::solver::{elapsed_ms, IterRecord};

pub(crate) fn gamma_at(rule: ManualGamma, t: usize) -> f64 {
    match rule {
        ManualGamma::Zero => 0.0,
        ManualGamma::Constant(g) => g,
        ManualGamma::Diminishing => 0.5 / ((t + 1) as f64).cbrt(),
    }
}

/// Shared per-iterate bookkeeping for the baselines.
pub(crate) struct Recorder<'a, P: CompositionProblem + ?Sized> {
    pub problem: &'a P,
    pub outer: &'a OuterFunction,
    pub reg: &'a Regularizer,
    pub metrics: Option<MetricsEvaluator>,
    pub cadence: usize,
    /// Index of the final iterate, which always carries metrics.
    pub last: usize,
    pub records: Vec<IterRecord>,
    pub wall_ms: Vec<f64>,
    started: Instant,
}

impl<'a, P: CompositionProblem + ?Sized> Recorder<'a, P> {
    pub fn new(
        problem: &'a P,
        outer: &'a OuterFunction,
        reg: &'a Regularizer,
        cadence: Option<usize>,
        last: usize,
        mega_batch: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let metrics = match cadence {
            Some(0) => return crate::error::config("metric cadence must be positive"),
            Some(_) => Some(MetricsEvaluator::new(
                problem.num_samples(),
                mega_batch,
                seed,
            )?),
            None => None,
        };
        Ok(Self {
            problem,
            outer,
            reg,
            metrics,
            cadence: cadence.unwrap_or(usize::MAX),
            last,
            records: Vec::new(),
            wall_ms: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn record(
        &mut self,
        t: usize,
        stage: usize,
        spent: OracleCounters,
        x: &[f64],
        eta: f64,
        gamma: f64,
    ) -> Result<()> {
        let n = self.problem.num_samples();
        let mut rec = IterRecord {
            t,
            stage,
            oracle_f: spent.fn_evals,
            oracle_j: spent.jac_evals,
            epoch: spent.epochs(n),
            omega: 1.0,
            objective: None,
            grad_map_sq: None,
        };
        if let Some(m) = &self.metrics {
            if t.is_multiple_of(self.cadence) || t == self.last {
                rec.objective = Some(m.objective(self.problem, self.outer, self.reg, x)?);
                rec.grad_map_sq = Some(
                    m.gradient_mapping(self.problem, self.outer, self.reg, x, eta, gamma)?
                        .0,
                );
            }
        }
        self.records.push(rec);
        self.wall_ms.push(elapsed_ms(self.started));
        Ok(())
    }
}
