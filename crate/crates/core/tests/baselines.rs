mod common;

use std::sync::Arc;

use common::{max_rel, HalfSq, Toy};
use hscg_core::baselines::{run_civr, run_scg, CivrConfig, ScgConfig};
use hscg_core::metrics::MetricsEvaluator;
use hscg_core::outer::{HalfSquaredNorm, LinearOuter};
use hscg_core::problems::{synthetic_minimax, ModelSelectionProblem};
use hscg_core::solver::prox_step;
use hscg_core::*;

/// Full-batch proximal gradient on `½‖mean F‖²`, returning the iterate after `iters` steps.
fn prox_gradient(prob: &Toy, reg: &Regularizer, x0: &[f64], eta: f64, iters: usize) -> Vec<f64> {
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    let eval = MetricsEvaluator::new(prob.num_samples(), None, 0).unwrap();
    let mut x = x0.to_vec();
    for _ in 0..iters {
        let g = eval.gradient(prob, &outer, &x, 0.0).unwrap();
        x = prox_step(reg, &x, &g, eta, 1.0).1;
    }
    x
}

#[test]
fn scg_full_batch_unit_weight_is_prox_gradient() {
    let prob = Toy::new(9, 4);
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    let reg = Regularizer::L1 { lambda: 0.03 };
    let x0 = vec![0.6, -0.4, 0.2, 0.9];
    let mut cfg = ScgConfig::new(15, 9, 0.2);
    cfg.a_exponent = 0.0;
    cfg.x0 = Some(x0.clone());
    let r = run_scg(&prob, &outer, &reg, &cfg).unwrap();
    let direct = prox_gradient(&prob, &reg, &x0, 0.2, 16);
    assert!(max_rel(&r.x_last, &direct) <= 1e-12);
}

#[test]
fn scg_is_deterministic() {
    let prob = Toy::new(30, 4);
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    let mut cfg = ScgConfig::new(40, 5, 0.1);
    cfg.seed = 3;
    cfg.cadence = Some(10);
    cfg.x0 = Some(vec![0.5; 4]);
    let a = run_scg(&prob, &outer, &Regularizer::Zero, &cfg).unwrap();
    let b = run_scg(&prob, &outer, &Regularizer::Zero, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scg_deterministic_quadratic_decreases() {
    let prob = HalfSq {
        centers: vec![vec![0.0; 3]],
    };
    let outer = OuterFunction::Smooth(Arc::new(LinearOuter { weights: vec![1.0] }));
    let mut cfg = ScgConfig::new(200, 1, 0.4);
    cfg.a_exponent = 0.0;
    cfg.cadence = Some(1);
    cfg.x0 = Some(vec![2.0, -1.0, 0.5]);
    let r = run_scg(&prob, &outer, &Regularizer::Zero, &cfg).unwrap();
    let objs: Vec<f64> = r.metric_records().map(|m| m.objective.unwrap()).collect();
    let grads: Vec<f64> = r.metric_records().map(|m| m.grad_map_sq.unwrap()).collect();
    let stop = grads
        .iter()
        .position(|g| g.sqrt() < 1e-8)
        .expect("reaches 1e-8");
    assert!(objs[..=stop].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn scg_counts_independent_batches() {
    let prob = Toy::new(30, 4);
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    let r = run_scg(
        &prob,
        &outer,
        &Regularizer::Zero,
        &ScgConfig::new(19, 6, 0.1),
    )
    .unwrap();
    assert_eq!(r.counters.fn_evals, 20 * 6);
    assert_eq!(r.counters.jac_evals, 20 * 6);
}

#[test]
fn civr_single_step_epochs_are_prox_gradient() {
    let prob = Toy::new(7, 3);
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    let reg = Regularizer::SquaredL2 { lambda: 0.2 };
    let x0 = vec![0.8, -0.5, 0.3];
    let mut cfg = CivrConfig::new(12, 1, 7, 2, 0.25);
    cfg.x0 = Some(x0.clone());
    let r = run_civr(&prob, &outer, &reg, &cfg).unwrap();
    let direct = prox_gradient(&prob, &reg, &x0, 0.25, 12);
    assert!(max_rel(&r.x_last, &direct) <= 1e-12);
    assert_eq!(r.counters.fn_evals, 12 * 7);
}

#[test]
fn civr_inner_loop_is_sarah_recursion() {
    let prob = Toy::new(5, 3);
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    let x0 = vec![0.2, 0.4, -0.1];
    let (tau, inner, eta, seed) = (6, 2, 0.3, 11);
    let mut cfg = CivrConfig::new(1, tau, 5, inner, eta);
    cfg.seed = seed;
    cfg.x0 = Some(x0.clone());
    let r = run_civr(&prob, &outer, &Regularizer::Zero, &cfg).unwrap();

    let mut plan = BatchPlan::uniform(inner);
    plan.b0 = 5;
    plan.b0_hat = 5;
    let mut est = HybridEstimators::init(&prob, &x0, &plan, seed).unwrap();
    let mut x = x0;
    for t in 0..tau {
        if t > 0 {
            est.update(&prob, &x, 1.0, 1.0, (&plan).into()).unwrap();
        }
        let v = est.gradient_estimate(&outer, 0.0).unwrap();
        x = prox_step(&Regularizer::Zero, &x, &v, eta, 1.0).1;
    }
    assert_eq!(r.x_last, x);
    assert_eq!(r.counters, est.counters);
}

#[test]
fn civr_epoch_oracle_count() {
    let prob = Toy::new(50, 3);
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    let (epochs, tau, big, inner) = (3u64, 8u64, 40u64, 4u64);
    let cfg = CivrConfig::new(
        epochs as usize,
        tau as usize,
        big as usize,
        inner as usize,
        0.05,
    );
    let r = run_civr(&prob, &outer, &Regularizer::Zero, &cfg).unwrap();
    let per_epoch = big + (tau - 1) * 2 * inner;
    assert_eq!(r.counters.fn_evals, epochs * per_epoch);
    assert_eq!(r.counters.jac_evals, epochs * per_epoch);
    assert_eq!(r.records.len(), (epochs * tau) as usize);
    assert_eq!(r.records[tau as usize].oracle_f, per_epoch);
}

#[test]
fn all_solvers_share_metrics() {
    let n = 64;
    let prob = ModelSelectionProblem::new(synthetic_minimax(n, 8, 0.1, 2), 1e-4).unwrap();
    let (outer, reg) = (prob.outer(), prob.regularizer());
    let gamma = ManualGamma::Diminishing;

    let mut hscg = SolverConfig::new(
        ScheduleVariant::Manual(ManualSchedule {
            eta: 0.5,
            theta: 1.0,
            beta: None,
            gamma,
        }),
        20,
        4,
    );
    hscg.cadence = Some(1);
    let mut scg = ScgConfig::new(20, 4, 0.5);
    scg.gamma = gamma;
    scg.cadence = Some(1);
    let mut civr = CivrConfig::new(3, 7, 32, 4, 0.5);
    civr.gamma = gamma;
    civr.cadence = Some(1);

    let runs = [
        run(&prob, &outer, &reg, &hscg).unwrap(),
        run_scg(&prob, &outer, &reg, &scg).unwrap(),
        run_civr(&prob, &outer, &reg, &civr).unwrap(),
    ];
    let first: Vec<(f64, f64)> = runs
        .iter()
        .map(|r| {
            (
                r.records[0].objective.unwrap(),
                r.records[0].grad_map_sq.unwrap(),
            )
        })
        .collect();
    assert!(first.windows(2).all(|w| w[0] == w[1]), "{first:?}");

    let eval = MetricsEvaluator::new(n, None, 0).unwrap();
    for r in &runs {
        assert_eq!(r.records[0].oracle_f, 0);
        for rec in &r.records {
            assert_eq!(rec.epoch, rec.oracle_f as f64 / n as f64);
        }
        for w in r.records.windows(2) {
            assert!(w[1].t > w[0].t && w[1].oracle_f >= w[0].oracle_f);
        }
        let last = r.records.last().unwrap();
        assert!(r.epochs() >= last.epoch);
        let obj = eval.objective(&prob, &outer, &reg, &r.x_last).unwrap();
        assert!(obj.is_finite());
    }
}

#[test]
fn baselines_reject_bad_configs() {
    let prob = Toy::new(10, 3);
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    assert!(run_scg(
        &prob,
        &outer,
        &Regularizer::Zero,
        &ScgConfig::new(5, 11, 0.1)
    )
    .is_err());
    assert!(run_scg(
        &prob,
        &outer,
        &Regularizer::Zero,
        &ScgConfig::new(5, 2, 0.0)
    )
    .is_err());
    assert!(run_civr(
        &prob,
        &outer,
        &Regularizer::Zero,
        &CivrConfig::new(2, 0, 10, 2, 0.1)
    )
    .is_err());
    assert!(run_civr(
        &prob,
        &outer,
        &Regularizer::Zero,
        &CivrConfig::new(2, 3, 11, 2, 0.1)
    )
    .is_err());
    let nonsmooth = ModelSelectionProblem::new(synthetic_minimax(10, 3, 0.0, 0), 1e-4).unwrap();
    assert!(run_scg(
        &nonsmooth,
        &nonsmooth.outer(),
        &nonsmooth.regularizer(),
        &ScgConfig::new(5, 2, 0.1)
    )
    .is_err());
}
