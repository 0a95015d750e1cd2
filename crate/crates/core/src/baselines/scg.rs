//! Two-timescale stochastic compositional gradient.
//!
//! `u_{t+1} = (1 − a_t)u_t + a_t F_B(x_t)`,
//! `x_{t+1} = prox_{ηR}(x_t − η J_B(x_t)ᵀ∇φγt(u_{t+1}))`, `a_t = (t+1)^{−a}`.

use crate::error::{config, Result};
use crate::estimators::{BatchSampler, OracleCounters};
use crate::outer::OuterFunction;
use crate::problem::{batch_jacobian_tmul, batch_value, CompositionProblem};
use crate::regularizer::Regularizer;
use crate::schedule::ManualGamma;
use crate::solver::{at_iteration, initial_point, numeric, prox_step, RunRecord};

use super::{gamma_at, Recorder};

#[derive(Debug, Clone)]
pub struct ScgConfig {
    /// Steps are taken at `t = 0..=T`.
    pub horizon: usize,
    pub batch: usize,
    pub eta: f64,
    /// Exponent `a` in `a_t = (t+1)^{−a}`; `0` gives `a_t = 1`.
    pub a_exponent: f64,
    pub gamma: ManualGamma,
    pub seed: u64,
    pub cadence: Option<usize>,
    pub mega_batch: Option<usize>,
    pub x0: Option<Vec<f64>>,
}

impl ScgConfig {
    pub fn new(horizon: usize, batch: usize, eta: f64) -> Self {
        Self {
            horizon,
            batch,
            eta,
            a_exponent: 0.6,
            gamma: ManualGamma::Zero,
            seed: 0,
            cadence: None,
            mega_batch: None,
            x0: None,
        }
    }
}

pub fn run_scg<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    reg: &Regularizer,
    cfg: &ScgConfig,
) -> Result<RunRecord> {
    let n = problem.num_samples();
    if cfg.batch == 0 || cfg.batch > n {
        return config(format!("SCG batch {} must lie in [1, {n}]", cfg.batch));
    }
    if !(cfg.eta > 0.0) {
        return config("SCG step eta must be positive");
    }
    if !(cfg.a_exponent >= 0.0) {
        return config("SCG averaging exponent must be nonnegative");
    }
    if outer.needs_smoothing() && gamma_at(cfg.gamma, 0) <= 0.0 {
        return config("SCG needs gamma > 0 when psi is not strongly convex");
    }
    let mut rec = Recorder::new(
        problem,
        outer,
        reg,
        cfg.cadence,
        cfg.horizon,
        cfg.mega_batch,
        cfg.seed,
    )?;
    let mut sampler = BatchSampler::new(cfg.seed, n, false);
    let mut x = initial_point(problem, &cfg.x0)?;
    let mut u = vec![0.0; problem.range_dim()];
    let mut counters = OracleCounters::default();
    for t in 0..=cfg.horizon {
        let gamma = gamma_at(cfg.gamma, t);
        rec.record(t, 0, counters, &x, cfg.eta, gamma)?;
        let a = ((t + 1) as f64).powf(-cfg.a_exponent);
        let fb = batch_value(problem, &x, &sampler.draw(cfg.batch)?);
        counters.fn_evals += cfg.batch as u64;
        if a == 1.0 {
            u = fb;
        } else {
            for (ui, fi) in u.iter_mut().zip(&fb) {
                *ui = (1.0 - a) * *ui + a * fi;
            }
        }
        let w = outer.grad(&u, gamma).map_err(at_iteration(t))?;
        let v = batch_jacobian_tmul(problem, &x, &sampler.draw(cfg.batch)?, &w);
        counters.jac_evals += cfg.batch as u64;
        numeric(t, &v, "gradient estimate")?;
        x = prox_step(reg, &x, &v, cfg.eta, 1.0).1;
        numeric(t, &x, "iterate")?;
    }
    Ok(RunRecord {
        solver: "scg".into(),
        seed: cfg.seed,
        n,
        wall_ms: rec.wall_ms,
        records: rec.records,
        selected: cfg.horizon + 1,
        x_bar: x.clone(),
        eta_bar: cfg.eta,
        gamma_bar: gamma_at(cfg.gamma, cfg.horizon),
        x_last: x,
        counters,
        complete: true,
        iterates: None,
    })
}
