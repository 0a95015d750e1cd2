//! Epoch-restarted SARAH-type compositional variance reduction.
//!
//! Each epoch rebuilds `F̃`, `J̃` from a mega-batch of size `B`, then runs
//! `τ − 1` inner steps of the correlated SARAH recursion (`β = β̂ = 1`) with
//! full prox steps (`θ = 1`).

use crate::error::{config, Result};
use crate::estimators::{BatchPlan, BatchSampler, HybridEstimators, OracleCounters, StepBatches};
use crate::outer::OuterFunction;
use crate::problem::CompositionProblem;
use crate::regularizer::Regularizer;
use crate::schedule::ManualGamma;
use crate::solver::{at_iteration, initial_point, numeric, prox_step, RunRecord};

use super::{gamma_at, Recorder};

#[derive(Debug, Clone)]
pub struct CivrConfig {
    /// Number of outer epochs.
    pub epochs: usize,
    /// Epoch length `τ` (iterations per epoch, including the first).
    pub tau: usize,
    /// Epoch-start batch `B`.
    pub mega_batch: usize,
    pub inner_batch: usize,
    pub eta: f64,
    pub gamma: ManualGamma,
    pub seed: u64,
    pub cadence: Option<usize>,
    /// Metric evaluation batch (full data when `None`).
    pub metric_batch: Option<usize>,
    pub x0: Option<Vec<f64>>,
}

impl CivrConfig {
    pub fn new(epochs: usize, tau: usize, mega_batch: usize, inner_batch: usize, eta: f64) -> Self {
        Self {
            epochs,
            tau,
            mega_batch,
            inner_batch,
            eta,
            gamma: ManualGamma::Zero,
            seed: 0,
            cadence: None,
            metric_batch: None,
            x0: None,
        }
    }

    fn plan(&self) -> BatchPlan {
        let mut plan = BatchPlan::uniform(self.inner_batch);
        plan.b0 = self.mega_batch;
        plan.b0_hat = self.mega_batch;
        plan
    }
}

pub fn run_civr<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    reg: &Regularizer,
    cfg: &CivrConfig,
) -> Result<RunRecord> {
    let n = problem.num_samples();
    if cfg.tau == 0 || cfg.epochs == 0 {
        return config("CIVR needs tau >= 1 and at least one epoch");
    }
    if !(cfg.eta > 0.0) {
        return config("CIVR step eta must be positive");
    }
    let plan = cfg.plan();
    plan.validate(n)?;
    if outer.needs_smoothing() && gamma_at(cfg.gamma, 0) <= 0.0 {
        return config("CIVR needs gamma > 0 when psi is not strongly convex");
    }
    let mut rec = Recorder::new(
        problem,
        outer,
        reg,
        cfg.cadence,
        cfg.epochs * cfg.tau - 1,
        cfg.metric_batch,
        cfg.seed,
    )?;
    let mut sampler = Some(BatchSampler::new(cfg.seed, n, false));
    let mut x = initial_point(problem, &cfg.x0)?;
    let mut counters = OracleCounters::default();
    let sizes = StepBatches::from(&plan);
    let mut t = 0;
    for e in 0..cfg.epochs {
        let base = counters;
        let mut est: Option<HybridEstimators> = None;
        for _ in 0..cfg.tau {
            let gamma = gamma_at(cfg.gamma, t);
            let spent = base + est.as_ref().map(|e| e.counters).unwrap_or_default();
            rec.record(t, e, spent, &x, cfg.eta, gamma)?;
            let st = match est.as_mut() {
                None => est.insert(HybridEstimators::init_with_sampler(
                    problem,
                    &x,
                    &plan,
                    sampler.take().expect("sampler"),
                )?),
                Some(st) => {
                    st.update(problem, &x, 1.0, 1.0, sizes)?;
                    st
                }
            };
            let v = st
                .gradient_estimate(outer, gamma)
                .map_err(at_iteration(t))?;
            numeric(t, &v, "gradient estimate")?;
            x = prox_step(reg, &x, &v, cfg.eta, 1.0).1;
            numeric(t, &x, "iterate")?;
            t += 1;
        }
        let est = est.expect("epoch ran at least one iteration");
        counters = base + est.counters;
        sampler = Some(est.into_sampler());
    }
    Ok(RunRecord {
        solver: "civr".into(),
        seed: cfg.seed,
        n,
        wall_ms: rec.wall_ms,
        records: rec.records,
        selected: t,
        x_bar: x.clone(),
        eta_bar: cfg.eta,
        gamma_bar: gamma_at(cfg.gamma, t.saturating_sub(1)),
        x_last: x,
        counters,
        complete: true,
        iterates: None,
    })
}
