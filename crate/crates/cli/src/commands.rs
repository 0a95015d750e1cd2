//! The `run`, `compare`, `gradcheck` and `kkt` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use hscg_core::gradcheck::{gradcheck, DEFAULT_STEP};
use hscg_core::kkt::{kkt_bound_rhs, kkt_construct, kkt_residual, minimal_c2, KktConfig};
use hscg_core::metrics::gradient_mapping;
use hscg_core::problem::{estimate_constants, EstimationSettings};
use hscg_core::{CompositionProblem, RunRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, SolverKind};
use crate::error::CliError;
use crate::output::{mean_std, nearest, read_final, write_run, FinalSummary, TraceRecord};
use crate::problem::{LoadedProblem, PerturbedJacobian};
use crate::runner::{parallel_map, plan, Overrides, RunPlan};

/// Gradient-check tolerance on the relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

pub struct Outcome {
    pub solver: SolverKind,
    pub seed: u64,
    pub trace: Vec<TraceRecord>,
    pub summary: FinalSummary,
    pub record: RunRecord,
}

fn load(config: &Path, ov: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    ov.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Validates every run, executes them and writes their artifacts.
fn execute_all(cfg: &ExperimentConfig, ov: &Overrides) -> Result<Vec<Outcome>, CliError> {
    let problem = LoadedProblem::load(cfg)?;
    let mut plans: Vec<(SolverKind, u64, RunPlan)> = Vec::new();
    for &kind in &cfg.solvers {
        for &seed in &cfg.seeds {
            plans.push((kind, seed, plan(cfg, kind, &problem, seed)?));
        }
    }
    fs::create_dir_all(&cfg.output)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.output.display())))?;
    let results = parallel_map(&plans, ov.jobs.unwrap_or(1), |(kind, seed, p)| {
        p.execute(&problem).map_err(|e| match e {
            CliError::Numeric(m) => CliError::Numeric(format!("{} seed {seed}: {m}", kind.name())),
            other => other,
        })
    });
    let mut out = Vec::with_capacity(plans.len());
    for ((kind, seed, _), res) in plans.iter().zip(results) {
        let record = res?;
        let (trace, summary) = write_run(&cfg.output, &record, problem.is_portfolio())?;
        println!(
            "{} seed={seed} iterations={} epochs={:.3} objective={} grad_map_sq={} -> {}",
            kind.name(),
            record.records.len(),
            summary.epochs,
            fmt_opt(summary.final_objective),
            fmt_opt(summary.final_grad_map_sq),
            cfg.output
                .join(format!("{}_{seed}.jsonl", record.solver))
                .display()
        );
        out.push(Outcome {
            solver: *kind,
            seed: *seed,
            trace,
            summary,
            record,
        });
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

pub fn cmd_run(config: &Path, ov: &Overrides) -> Result<Vec<Outcome>, CliError> {
    let cfg = load(config, ov)?;
    execute_all(&cfg, ov)
}

/// Result of a comparison: the merged CSV, the table and whether the
/// ordering warning fired.
pub struct Comparison {
    pub outcomes: Vec<Outcome>,
    pub merged_csv: String,
    pub table: String,
    pub warning: Option<String>,
}

pub fn cmd_compare(config: &Path, ov: &Overrides) -> Result<Comparison, CliError> {
    let cfg = load(config, ov)?;
    let mut kinds = cfg.solvers.clone();
    kinds.dedup();
    if kinds.len() < 2 {
        return Err(CliError::Config(
            "compare needs at least two distinct solvers".into(),
        ));
    }
    let budget = cfg.epochs_for(kinds[0]);
    for &k in &kinds[1..] {
        if cfg.epochs_for(k) != budget {
            return Err(CliError::Config(format!(
                "epoch budgets differ: {} has {} epochs but {} has {}",
                kinds[0].name(),
                budget,
                k.name(),
                cfg.epochs_for(k)
            )));
        }
    }
    let outcomes = execute_all(&cfg, ov)?;
    let merged_csv = merge(&kinds, &outcomes, budget);
    let (table, warning) = table(&kinds, &outcomes);
    fs::write(cfg.output.join("compare.csv"), &merged_csv)?;
    fs::write(cfg.output.join("compare.txt"), &table)?;
    print!("{table}");
    Ok(Comparison {
        outcomes,
        merged_csv,
        table,
        warning,
    })
}

/// Wide CSV on an integer epoch grid; each cell is the seed mean of the
/// nearest record.
fn merge(kinds: &[SolverKind], outcomes: &[Outcome], budget: f64) -> String {
    let mut s = String::from("epoch");
    for k in kinds {
        let _ = write!(s, ",{0}_objective,{0}_grad_map_sq", k.name());
    }
    s.push('\n');
    for e in 0..=budget.floor() as usize {
        let epoch = e as f64;
        let _ = write!(s, "{epoch}");
        for k in kinds {
            let hits: Vec<&TraceRecord> = outcomes
                .iter()
                .filter(|o| o.solver == *k)
                .filter_map(|o| nearest(&o.trace, epoch))
                .collect();
            if hits.is_empty() {
                s.push_str(",,");
                continue;
            }
            let m = hits.len() as f64;
            let obj = hits.iter().map(|r| r.objective).sum::<f64>() / m;
            let gm = hits.iter().map(|r| r.grad_map_sq).sum::<f64>() / m;
            let _ = write!(s, ",{obj},{gm}");
        }
        s.push('\n');
    }
    s
}

fn table(kinds: &[SolverKind], outcomes: &[Outcome]) -> (String, Option<String>) {
    let mut s = format!(
        "{:<14} {:>5} {:>28} {:>28}\n",
        "solver", "seeds", "final objective", "final grad_map_sq"
    );
    let mut means = Vec::new();
    for k in kinds {
        let runs: Vec<&Outcome> = outcomes.iter().filter(|o| o.solver == *k).collect();
        let obj: Vec<f64> = runs
            .iter()
            .filter_map(|o| o.summary.final_objective)
            .collect();
        let gm: Vec<f64> = runs
            .iter()
            .filter_map(|o| o.summary.final_grad_map_sq)
            .collect();
        let (om, os) = mean_std(&obj);
        let (gmm, gms) = mean_std(&gm);
        means.push((*k, om));
        let _ = writeln!(
            s,
            "{:<14} {:>5} {:>28} {:>28}",
            k.name(),
            runs.len(),
            format!("{om:.6e} ± {os:.2e}"),
            format!("{gmm:.6e} ± {gms:.2e}")
        );
    }
    let mean_of = |k: SolverKind| means.iter().find(|(m, _)| *m == k).map(|(_, v)| *v);
    let warning = match (mean_of(SolverKind::Hscg), mean_of(SolverKind::Scg)) {
        (Some(h), Some(g)) if h > g => Some(format!(
            "WARNING: hscg mean final objective {h:.6e} exceeds scg mean final objective {g:.6e}"
        )),
        _ => None,
    };
    if let Some(w) = &warning {
        s.push_str(w);
        s.push('\n');
    }
    (s, warning)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckLine {
    pub name: String,
    pub max_rel_err: f64,
}

pub fn cmd_gradcheck(config: &Path, ov: &Overrides) -> Result<Vec<GradcheckLine>, CliError> {
    let cfg = load(config, ov)?;
    let problem = LoadedProblem::load(&cfg)?;
    let sec = &cfg.gradcheck;
    let outer = problem.outer();
    let gamma = sec
        .gamma
        .unwrap_or(if outer.needs_smoothing() { 0.5 } else { 0.0 });
    let tol = sec.tolerance.unwrap_or(GRADCHECK_TOL);
    let n = problem.num_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds[0]);
    let x: Vec<f64> = (0..problem.dim())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let samples: Vec<usize> = (0..sec.samples.unwrap_or(20).min(n)).collect();
    let q = problem.range_dim();
    let points: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..q).map(|_| rng.random_range(0.1..2.0)).collect())
        .collect();
    let report = match sec.jacobian_perturbation {
        Some(delta) => {
            let bad = PerturbedJacobian {
                inner: &problem,
                delta,
            };
            gradcheck(&bad, &outer, &x, &samples, &points, gamma, DEFAULT_STEP)?
        }
        None => gradcheck(&problem, &outer, &x, &samples, &points, gamma, DEFAULT_STEP)?,
    };
    let lines: Vec<GradcheckLine> = report
        .checks
        .iter()
        .map(|c| GradcheckLine {
            name: c.name.clone(),
            max_rel_err: c.max_rel_err,
        })
        .collect();
    for l in &lines {
        let verdict = if l.max_rel_err <= tol { "ok" } else { "FAIL" };
        println!(
            "{:<16} max relative error {:.3e} {verdict}",
            l.name, l.max_rel_err
        );
    }
    let failing: Vec<&str> = lines
        .iter()
        .filter(|l| !(l.max_rel_err <= tol))
        .map(|l| l.name.as_str())
        .collect();
    if failing.is_empty() {
        Ok(lines)
    } else {
        Err(CliError::Check(format!(
            "gradient check above {tol:e}: {}",
            failing.join(", ")
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktRecord {
    pub solver: String,
    pub seed: u64,
    #[serde(rename = "E")]
    pub e: f64,
    pub grad_map_sq: f64,
    pub bound_rhs: f64,
    pub eps_hat: f64,
    pub gamma_t: f64,
    pub m_f: f64,
    pub c2: f64,
}

pub struct KktArgs<'a> {
    pub run_dir: &'a Path,
    pub config: &'a Path,
    pub solver: Option<SolverKind>,
}

/// Approximate KKT pair from a stored run; fails with a check error when the
/// residual exceeds the bound.
pub fn cmd_kkt(args: &KktArgs<'_>, ov: &Overrides) -> Result<KktRecord, CliError> {
    let cfg = load(args.config, ov)?;
    let solver = args.solver.unwrap_or(cfg.solvers[0]);
    let seed = cfg.seeds[0];
    let fin = read_final(args.run_dir, solver.name(), seed)?;
    let problem = LoadedProblem::load(&cfg)?;
    let (outer, reg) = (problem.outer(), problem.regularizer());
    if fin.x_bar.len() != problem.dim() || fin.n != problem.num_samples() {
        return Err(CliError::Data(format!(
            "run artifacts in {} do not match the configured problem",
            args.run_dir.display()
        )));
    }
    let mf = outer
        .as_max_form()
        .ok_or_else(|| CliError::Config("KKT residuals need a max-form outer function".into()))?;
    let gamma_t = cfg.kkt.gamma.unwrap_or(fin.gamma_bar);
    let n = problem.num_samples();
    let (xs, ys) = kkt_construct(
        &problem,
        &outer,
        &reg,
        &fin.x_bar,
        fin.eta_bar,
        gamma_t,
        &KktConfig::full(n),
        seed,
    )?;
    let e = kkt_residual(&problem, &outer, &reg, &xs, &ys, None, seed)?;
    let (grad_map_sq, _) = gradient_mapping(
        &problem,
        &outer,
        &reg,
        &fin.x_bar,
        fin.eta_bar,
        gamma_t,
        None,
        seed,
    )?;
    let eps_hat = grad_map_sq.sqrt();
    let m_f = match cfg.kkt.m_f {
        Some(m) => m,
        None => {
            estimate_constants(&problem, &outer, &fin.x_bar, &EstimationSettings::default()).m_f
        }
    };
    let c2 = cfg.kkt.c2.unwrap_or_else(|| minimal_c2(gamma_t, eps_hat));
    let bound_rhs = kkt_bound_rhs(m_f, mf.k_norm(), c2, mf.grad_b_sup(), eps_hat);
    let rec = KktRecord {
        solver: solver.name().into(),
        seed,
        e,
        grad_map_sq,
        bound_rhs,
        eps_hat,
        gamma_t,
        m_f,
        c2,
    };
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(args.run_dir.join("kkt.jsonl"))?;
    writeln!(
        f,
        "{}",
        serde_json::to_string(&rec).expect("record serializes")
    )?;
    println!("E = {e:.6e}, bound = {bound_rhs:.6e}, grad_map_sq = {grad_map_sq:.6e}");
    if e <= bound_rhs {
        Ok(rec)
    } else {
        Err(CliError::Check(format!(
            "KKT residual {e:.6e} exceeds bound {bound_rhs:.6e}"
        )))
    }
}
