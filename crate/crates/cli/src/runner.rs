//! Turns a configuration into solver runs.

use hscg_core::baselines::{run_civr, run_scg, CivrConfig, ScgConfig};
use hscg_core::problem::{estimate_constants, EstimationSettings};
use hscg_core::{
    run, run_restart, CompositionProblem, ManualGamma, ManualSchedule, OuterFunction,
    ProblemConstants, RunRecord, ScheduleVariant, SolverConfig,
};

use crate::config::{
    ConstantsConfig, ExperimentConfig, GammaSetting, HscgSection, ScheduleKind, SolverKind,
};
use crate::error::CliError;
use crate::problem::LoadedProblem;

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<std::path::PathBuf>,
    pub jobs: Option<usize>,
    pub cadence: Option<usize>,
    pub mega_batch: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(c) = self.cadence {
            cfg.cadence = Some(c);
        }
        if let Some(m) = self.mega_batch {
            cfg.mega_batch = Some(m);
        }
    }
}

/// A fully resolved solver invocation.
#[derive(Debug, Clone)]
pub enum RunPlan {
    Hscg(SolverConfig),
    HscgRestart(SolverConfig),
    Scg(ScgConfig),
    Civr(CivrConfig),
}

impl RunPlan {
    pub fn execute(&self, problem: &LoadedProblem) -> Result<RunRecord, CliError> {
        let (outer, reg) = (problem.outer(), problem.regularizer());
        let rec = match self {
            RunPlan::Hscg(c) => run(problem, &outer, &reg, c)?,
            RunPlan::HscgRestart(c) => run_restart(problem, &outer, &reg, c)?,
            RunPlan::Scg(c) => run_scg(problem, &outer, &reg, c)?,
            RunPlan::Civr(c) => run_civr(problem, &outer, &reg, c)?,
        };
        Ok(rec)
    }
}

fn div_ceil(a: usize, b: usize) -> usize {
    a.div_ceil(b.max(1))
}

fn positive(name: &str, v: Option<f64>) -> Result<f64, CliError> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(CliError::Config(format!("{name} = {x} must be positive"))),
        None => Err(CliError::Config(format!("{name} is required"))),
    }
}

fn manual_gamma(setting: &Option<GammaSetting>, outer: &OuterFunction) -> ManualGamma {
    match setting {
        Some(GammaSetting::Value(g)) => ManualGamma::Constant(*g),
        Some(GammaSetting::Named(s)) if s == "zero" => ManualGamma::Zero,
        Some(GammaSetting::Named(_)) => ManualGamma::Diminishing,
        None if outer.needs_smoothing() => ManualGamma::Diminishing,
        None => ManualGamma::Zero,
    }
}

/// Problem constants from the `[constants]` table; missing values are
/// estimated around the origin with a fixed seed.
pub fn problem_constants(
    problem: &LoadedProblem,
    outer: &OuterFunction,
    c: &ConstantsConfig,
) -> ProblemConstants {
    if let (Some(m_f), Some(l_f), Some(s_f), Some(s_j)) = (c.m_f, c.l_f, c.sigma_f, c.sigma_j) {
        return ProblemConstants::given(m_f, l_f, s_f, s_j, outer);
    }
    let defaults = EstimationSettings::default();
    let settings = EstimationSettings {
        pairs: c.pairs.unwrap_or(defaults.pairs),
        radius: c.radius.unwrap_or(defaults.radius),
        margin: c.margin.unwrap_or(defaults.margin),
        ..defaults
    };
    let mut pc = estimate_constants(problem, outer, &vec![0.0; problem.dim()], &settings);
    pc.m_f = c.m_f.unwrap_or(pc.m_f);
    pc.l_f = c.l_f.unwrap_or(pc.l_f);
    pc.sigma_f = c.sigma_f.unwrap_or(pc.sigma_f);
    pc.sigma_j = c.sigma_j.unwrap_or(pc.sigma_j);
    pc
}

/// Default metric cadence: about one epoch of iterations.
fn epoch_cadence(n: usize, cost_per_iter: usize) -> usize {
    (n / cost_per_iter.max(1)).max(1)
}

fn hscg_config(
    cfg: &ExperimentConfig,
    sec: &HscgSection,
    kind: SolverKind,
    problem: &LoadedProblem,
    seed: u64,
) -> Result<SolverConfig, CliError> {
    let n = problem.num_samples();
    let outer = problem.outer();
    let blocks = cfg
        .problem
        .blocks
        .unwrap_or_else(|| problem.default_blocks());
    let b = sec.batch.unwrap_or_else(|| div_ceil(n, blocks));
    if b == 0 || b > n {
        return Err(CliError::Config(format!(
            "[{}] batch {b} must lie in [1, {n}]",
            kind.name()
        )));
    }
    let correlated = sec.correlated.unwrap_or(true);
    let stages = sec.stages.unwrap_or(1);
    if stages == 0 {
        return Err(CliError::Config(format!(
            "[{}] stages must be positive",
            kind.name()
        )));
    }
    if kind == SolverKind::Hscg && stages != 1 {
        return Err(CliError::Config(
            "[hscg] runs a single stage; use the hscg-restart solver for stages > 1".into(),
        ));
    }
    let per_step = if correlated { 2 * b } else { 3 * b };

    let variant = match sec.schedule {
        ScheduleKind::Manual => ScheduleVariant::Manual(ManualSchedule {
            eta: positive(&format!("[{}] eta", kind.name()), sec.eta)?,
            theta: sec.theta.unwrap_or(1.0),
            beta: sec.beta,
            gamma: manual_gamma(&sec.gamma, &outer),
        }),
        ScheduleKind::Thm1 => ScheduleVariant::Thm1,
        ScheduleKind::Thm2 => ScheduleVariant::Thm2,
        ScheduleKind::Thm3 => match &sec.gamma {
            Some(GammaSetting::Value(g)) => ScheduleVariant::Thm3 { gamma: *g },
            _ => {
                return Err(CliError::Config(format!(
                    "[{}] thm3 needs a numeric gamma",
                    kind.name()
                )))
            }
        },
        ScheduleKind::Thm4 => ScheduleVariant::Thm4,
    };

    let b0 = sec.b0_hat.unwrap_or(b);
    let horizon = match (sec.horizon, sec.schedule) {
        (Some(h), _) => h,
        (None, ScheduleKind::Manual) => {
            let budget = cfg.epochs_for(kind) * n as f64 / stages as f64;
            let steps = ((budget - b0 as f64) / per_step as f64).floor();
            if steps < 1.0 {
                return Err(CliError::Config(format!(
                    "[{}] epoch budget {} is too small for batch {b}",
                    kind.name(),
                    cfg.epochs_for(kind)
                )));
            }
            steps as usize
        }
        (None, _) => {
            return Err(CliError::Config(format!(
                "[{}] theorem schedules need an explicit horizon",
                kind.name()
            )))
        }
    };

    let mut sc = SolverConfig::new(variant, horizon, b);
    sc.stages = stages;
    sc.b0_hat = sec.b0_hat;
    sc.seed = seed;
    sc.plan.corr_f = correlated;
    sc.plan.corr_j = correlated;
    if let Some(c0) = sec.c0 {
        sc.plan.c0 = c0;
    }
    if let Some(c1) = sec.c1 {
        sc.plan.c1 = c1;
    }
    let needs_constants = sec.schedule != ScheduleKind::Manual || sec.constants.is_some();
    if needs_constants {
        sc.constants = Some(problem_constants(
            problem,
            &outer,
            &sec.constants.clone().unwrap_or_default(),
        ));
    }
    sc.cadence = Some(cfg.cadence.unwrap_or_else(|| epoch_cadence(n, per_step)));
    sc.mega_batch = cfg.mega_batch;
    hscg_core::solver::build_schedule(problem, &outer, &sc)?;
    Ok(sc)
}

fn scg_config(
    cfg: &ExperimentConfig,
    problem: &LoadedProblem,
    seed: u64,
) -> Result<ScgConfig, CliError> {
    let n = problem.num_samples();
    let sec = &cfg.scg;
    let blocks = cfg
        .problem
        .blocks
        .unwrap_or_else(|| problem.default_blocks());
    let batch = sec.batch.unwrap_or_else(|| div_ceil(n, blocks));
    if batch == 0 || batch > n {
        return Err(CliError::Config(format!(
            "[scg] batch {batch} must lie in [1, {n}]"
        )));
    }
    let iters = (cfg.epochs_for(SolverKind::Scg) * n as f64 / batch as f64).floor() as usize;
    if iters < 2 {
        return Err(CliError::Config(
            "[scg] epoch budget is too small for its batch".into(),
        ));
    }
    let mut sc = ScgConfig::new(iters - 1, batch, positive("[scg] eta", sec.eta)?);
    if let Some(a) = sec.a_exponent {
        sc.a_exponent = a;
    }
    sc.gamma = manual_gamma(&sec.gamma, &problem.outer());
    sc.seed = seed;
    sc.cadence = Some(cfg.cadence.unwrap_or_else(|| epoch_cadence(n, batch)));
    sc.mega_batch = cfg.mega_batch;
    Ok(sc)
}

fn civr_config(
    cfg: &ExperimentConfig,
    problem: &LoadedProblem,
    seed: u64,
) -> Result<CivrConfig, CliError> {
    let n = problem.num_samples();
    let sec = &cfg.civr;
    let blocks = cfg
        .problem
        .blocks
        .unwrap_or_else(|| problem.default_blocks());
    let tau = sec.tau.unwrap_or(blocks);
    let mega = sec.mega.unwrap_or(n);
    let inner = sec.inner_batch.unwrap_or_else(|| div_ceil(n, blocks));
    if tau == 0 || mega == 0 || mega > n || inner == 0 || inner > n {
        return Err(CliError::Config(format!(
            "[civr] needs tau >= 1 and batches in [1, {n}] (tau {tau}, mega {mega}, inner_batch {inner})"
        )));
    }
    let per_epoch = mega + (tau - 1) * 2 * inner;
    let epochs = (cfg.epochs_for(SolverKind::Civr) * n as f64 / per_epoch as f64).floor() as usize;
    if epochs < 1 {
        return Err(CliError::Config(
            "[civr] epoch budget is smaller than one inner loop".into(),
        ));
    }
    let mut cc = CivrConfig::new(epochs, tau, mega, inner, positive("[civr] eta", sec.eta)?);
    cc.gamma = manual_gamma(&sec.gamma, &problem.outer());
    cc.seed = seed;
    cc.cadence = Some(
        cfg.cadence
            .unwrap_or_else(|| epoch_cadence(n, per_epoch / tau)),
    );
    cc.metric_batch = cfg.mega_batch;
    Ok(cc)
}

/// Resolves and validates the run of `kind` with `seed`.
pub fn plan(
    cfg: &ExperimentConfig,
    kind: SolverKind,
    problem: &LoadedProblem,
    seed: u64,
) -> Result<RunPlan, CliError> {
    if let Some(m) = cfg.mega_batch {
        if m == 0 || m > problem.num_samples() {
            return Err(CliError::Config(format!(
                "mega batch {m} must lie in [1, {}]",
                problem.num_samples()
            )));
        }
    }
    Ok(match kind {
        SolverKind::Hscg => RunPlan::Hscg(hscg_config(cfg, &cfg.hscg, kind, problem, seed)?),
        SolverKind::HscgRestart => {
            let mut sec = cfg.hscg_restart.clone();
            sec.stages = Some(sec.stages.unwrap_or(4));
            RunPlan::HscgRestart(hscg_config(cfg, &sec, kind, problem, seed)?)
        }
        SolverKind::Scg => RunPlan::Scg(scg_config(cfg, problem, seed)?),
        SolverKind::Civr => RunPlan::Civr(civr_config(cfg, problem, seed)?),
    })
}

/// Runs `tasks` on at most `jobs` threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(
    tasks: &[T],
    jobs: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let jobs = jobs.clamp(1, tasks.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                let r = f(&tasks[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("task ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let xs: Vec<u64> = (0..37).collect();
        for jobs in [1, 3, 64] {
            assert_eq!(
                parallel_map(&xs, jobs, |x| x * x),
                xs.iter().map(|x| x * x).collect::<Vec<_>>()
            );
        }
        assert!(parallel_map(&Vec::<u8>::new(), 4, |x| *x).is_empty());
    }
}
