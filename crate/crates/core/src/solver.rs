//! The smoothing hybrid variance-reduced SGD method and its restarting variant.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::estimators::{BatchPlan, BatchSampler, HybridEstimators, OracleCounters};
use crate::metrics::MetricsEvaluator;
use crate::outer::OuterFunction;
use crate::problem::{CompositionProblem, ProblemConstants};
use crate::regularizer::Regularizer;
use crate::schedule::{schedule, Constants, ScheduleInput, ScheduleState, ScheduleVariant};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub variant: ScheduleVariant,
    /// Horizon `T`; each stage runs iterations `t = 0..=T`.
    pub horizon: usize,
    /// Restart stages `S` (1 = no restart).
    pub stages: usize,
    /// Mini-batch `b`.
    pub b: usize,
    pub b0_hat: Option<usize>,
    /// Required by the theorem schedules; optional for manual ones.
    pub constants: Option<ProblemConstants>,
    /// Tuning constants, correlation flags and replacement mode.
    pub plan: BatchPlan,
    pub seed: u64,
    /// Evaluate metrics every `cadence` iterations and at the final one;
    /// `None` disables them.
    pub cadence: Option<usize>,
    pub mega_batch: Option<usize>,
    pub x0: Option<Vec<f64>>,
    /// Keep every iterate in the record (tests and diagnostics).
    pub keep_iterates: bool,
    /// Wall-clock cap; the record is flagged incomplete when hit.
    pub max_wall: Option<Duration>,
}

impl SolverConfig {
    pub fn new(variant: ScheduleVariant, horizon: usize, b: usize) -> Self {
        Self {
            variant,
            horizon,
            stages: 1,
            b,
            b0_hat: None,
            constants: None,
            plan: BatchPlan::uniform(b),
            seed: 0,
            cadence: None,
            mega_batch: None,
            x0: None,
            keep_iterates: false,
            max_wall: None,
        }
    }
}

/// Metrics and bookkeeping for one iterate `x_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// Global iteration index across stages.
    pub t: usize,
    pub stage: usize,
    /// Oracle calls spent before `x_t` was available.
    pub oracle_f: u64,
    pub oracle_j: u64,
    pub epoch: f64,
    /// Output-selection weight.
    pub omega: f64,
    pub objective: Option<f64>,
    pub grad_map_sq: Option<f64>,
}

/// Equality ignores `wall_ms`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub solver: String,
    pub seed: u64,
    pub n: usize,
    pub records: Vec<IterRecord>,
    /// Global index of the returned iterate.
    pub selected: usize,
    pub x_bar: Vec<f64>,
    pub eta_bar: f64,
    pub gamma_bar: f64,
    /// Iterate produced by the final step.
    pub x_last: Vec<f64>,
    pub counters: OracleCounters,
    pub complete: bool,
    /// Every `x_t` when `keep_iterates` was set.
    pub iterates: Option<Vec<Vec<f64>>>,
    /// Milliseconds since the start of the run, one entry per record.
    pub wall_ms: Vec<f64>,
}

impl PartialEq for RunRecord {
    fn eq(&self, o: &Self) -> bool {
        self.solver == o.solver
            && self.seed == o.seed
            && self.n == o.n
            && self.records == o.records
            && self.selected == o.selected
            && self.x_bar == o.x_bar
            && self.eta_bar == o.eta_bar
            && self.gamma_bar == o.gamma_bar
            && self.x_last == o.x_last
            && self.counters == o.counters
            && self.complete == o.complete
            && self.iterates == o.iterates
    }
}

pub(crate) fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

impl RunRecord {
    pub fn epochs(&self) -> f64 {
        self.counters.epochs(self.n)
    }

    /// Records carrying metrics.
    pub fn metric_records(&self) -> impl Iterator<Item = &IterRecord> {
        self.records.iter().filter(|r| r.objective.is_some())
    }
}

/// Inverse-CDF draw over nonnegative weights with a single uniform `u ∈ [0, 1)`.
/// A `u` landing exactly on a boundary goes to the lower index.
pub fn select_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target <= acc && *w > 0.0 {
            return i;
        }
    }
    weights
        .iter()
        .rposition(|w| *w > 0.0)
        .unwrap_or(weights.len().saturating_sub(1))
}

/// Output-selection RNG; independent of the batch sampler stream.
pub(crate) fn selection_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// `x̂ = prox_{ηR}(x − ηv)`, `x⁺ = (1 − θ)x + θx̂`, evaluated as `x + θ(x̂ − x)`.
pub fn prox_step(
    reg: &Regularizer,
    x: &[f64],
    v: &[f64],
    eta: f64,
    theta: f64,
) -> (Vec<f64>, Vec<f64>) {
    let trial: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi - eta * vi).collect();
    let x_hat = reg.prox(&trial, eta);
    let x_next = if theta == 1.0 {
        x_hat.clone()
    } else {
        x.iter()
            .zip(&x_hat)
            .map(|(xi, hi)| xi + theta * (hi - xi))
            .collect()
    };
    (x_hat, x_next)
}

pub(crate) fn numeric(iteration: usize, v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            iteration,
            message: format!("{what} is not finite"),
        })
    }
}

/// Tags an oracle input error with the iteration that produced it.
pub(crate) fn at_iteration(iteration: usize) -> impl Fn(Error) -> Error {
    move |err| match err {
        Error::InvalidInput(message) => Error::Numeric { iteration, message },
        other => other,
    }
}

pub(crate) fn initial_point<P: CompositionProblem + ?Sized>(
    problem: &P,
    x0: &Option<Vec<f64>>,
) -> Result<Vec<f64>> {
    match x0 {
        Some(x) if x.len() != problem.dim() => config(format!(
            "x0 has length {}, expected {}",
            x.len(),
            problem.dim()
        )),
        Some(x) => Ok(x.clone()),
        None => Ok(vec![0.0; problem.dim()]),
    }
}

/// Builds the derived constants and the parameter trajectory for `cfg`.
pub fn build_schedule<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    cfg: &SolverConfig,
) -> Result<(Option<Constants>, ScheduleState)> {
    let consts = match &cfg.constants {
        Some(pc) => Some(Constants::new(pc, outer.mu_psi(), &cfg.plan)?),
        None => None,
    };
    let sched = schedule(&ScheduleInput {
        variant: cfg.variant,
        horizon: cfg.horizon,
        b: cfg.b,
        b0_hat: cfg.b0_hat,
        constants: consts.as_ref(),
        base: &cfg.plan,
        n: problem.num_samples(),
    })?;
    if outer.needs_smoothing() && sched.gamma.iter().any(|g| *g <= 0.0) {
        return config(format!(
            "{} schedule has gamma = 0 but psi is not strongly convex; smoothing is required",
            cfg.variant.name()
        ));
    }
    Ok((consts, sched))
}

/// Single run of the method (`S = 1`).
pub fn run<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    reg: &Regularizer,
    cfg: &SolverConfig,
) -> Result<RunRecord> {
    if cfg.stages != 1 {
        return config("run() expects stages = 1; use run_restart for S > 1");
    }
    run_stages(problem, outer, reg, cfg)
}

/// Restarting variant: `S` warm-started stages of `T + 1` iterations.
pub fn run_restart<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    reg: &Regularizer,
    cfg: &SolverConfig,
) -> Result<RunRecord> {
    if cfg.stages < 1 {
        return config("stages S must be at least 1");
    }
    if cfg.stages > 1 && !cfg.variant.is_constant_step() {
        return config(format!(
            "restarting needs a constant-step schedule (thm1, thm3 or manual), got {}",
            cfg.variant.name()
        ));
    }
    run_stages(problem, outer, reg, cfg)
}

fn run_stages<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    reg: &Regularizer,
    cfg: &SolverConfig,
) -> Result<RunRecord> {
    let n = problem.num_samples();
    let (_, sched) = build_schedule(problem, outer, cfg)?;
    let per_stage = sched.len();
    let stages = cfg.stages;

    // Selection weights over all S(T+1) iterates.
    let weights: Vec<f64> = if stages == 1 {
        sched.omega.clone()
    } else {
        (0..stages)
            .flat_map(|_| sched.theta.iter().copied())
            .collect()
    };
    let selected = select_index(&weights, selection_rng(cfg.seed).random::<f64>());

    let metrics = match cfg.cadence {
        Some(0) => return config("metric cadence must be positive"),
        Some(_) => Some(MetricsEvaluator::new(n, cfg.mega_batch, cfg.seed)?),
        None => None,
    };
    let cadence = cfg.cadence.unwrap_or(usize::MAX);
    let started = Instant::now();

    let mut x = initial_point(problem, &cfg.x0)?;
    let mut sampler = Some(BatchSampler::new(cfg.seed, n, cfg.plan.with_replacement));
    let mut counters = OracleCounters::default();
    let mut records = Vec::with_capacity(per_stage * stages);
    let mut iterates = cfg.keep_iterates.then(Vec::new);
    let mut wall_ms = Vec::with_capacity(per_stage * stages);
    let mut chosen: Option<(Vec<f64>, f64, f64)> = None;
    let mut complete = true;

    'stages: for s in 0..stages {
        let base = counters;
        let mut est: Option<HybridEstimators> = None;
        for t in 0..per_stage {
            let global = s * per_stage + t;
            let (gamma, eta, theta) = (sched.gamma[t], sched.eta[t], sched.theta[t]);
            let spent = base + est.as_ref().map(|e| e.counters).unwrap_or_default();
            let mut rec = IterRecord {
                t: global,
                stage: s,
                oracle_f: spent.fn_evals,
                oracle_j: spent.jac_evals,
                epoch: spent.epochs(n),
                omega: weights[global],
                objective: None,
                grad_map_sq: None,
            };
            if let Some(m) = &metrics {
                if global % cadence == 0 || global + 1 == per_stage * stages {
                    rec.objective = Some(m.objective(problem, outer, reg, &x)?);
                    rec.grad_map_sq =
                        Some(m.gradient_mapping(problem, outer, reg, &x, eta, gamma)?.0);
                }
            }
            records.push(rec);
            wall_ms.push(elapsed_ms(started));
            if let Some(it) = iterates.as_mut() {
                it.push(x.clone());
            }
            if global == selected {
                chosen = Some((x.clone(), eta, gamma));
            }

            let e = match est.as_mut() {
                None => est.insert(HybridEstimators::init_with_sampler(
                    problem,
                    &x,
                    &sched.plan,
                    sampler.take().expect("sampler"),
                )?),
                Some(e) => {
                    e.update(
                        problem,
                        &x,
                        sched.beta[t - 1],
                        sched.beta_hat[t - 1],
                        sched.batches(t),
                    )?;
                    e
                }
            };
            let v = e
                .gradient_estimate(outer, gamma)
                .map_err(at_iteration(global))?;
            numeric(global, &v, "gradient estimate")?;
            let (_, x_next) = prox_step(reg, &x, &v, eta, theta);
            numeric(global, &x_next, "iterate")?;
            x = x_next;

            if let Some(cap) = cfg.max_wall {
                if started.elapsed() > cap {
                    complete = false;
                    break;
                }
            }
        }
        let est = est.expect("stage ran at least one iteration");
        counters = base + est.counters;
        sampler = Some(est.into_sampler());
        if !complete {
            break 'stages;
        }
    }

    // An interrupted run returns the last iterate reached.
    let (x_bar, eta_bar, gamma_bar) = match chosen {
        Some(c) => c,
        None => {
            let last = records.len() - 1;
            let t = last % per_stage;
            (x.clone(), sched.eta[t], sched.gamma[t])
        }
    };
    let selected = if complete {
        selected
    } else {
        selected.min(records.len() - 1)
    };

    Ok(RunRecord {
        solver: if stages == 1 {
            "hscg".into()
        } else {
            "hscg-restart".into()
        },
        seed: cfg.seed,
        n,
        records,
        selected,
        x_bar,
        eta_bar,
        gamma_bar,
        x_last: x,
        counters,
        complete,
        iterates,
        wall_ms,
    })
}
