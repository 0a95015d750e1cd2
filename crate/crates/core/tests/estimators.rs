mod common;

use common::{max_rel, HalfSq, Toy};
use hscg_core::estimators::{jt_mul, BatchPlan, HybridEstimators, StepBatches};
use hscg_core::gradcheck::fd_gradient;
use hscg_core::linalg::Matrix;
use hscg_core::outer::{LinearOuter, OuterFunction};
use hscg_core::problem::{batch_jacobian, batch_value, full_batch};
use hscg_core::problems::{portfolio::synthetic_returns, PortfolioProblem};
use hscg_core::{CompositionProblem, DualFunction, Error, MaxFormOuter};
use proptest::prelude::*;

fn plan(n: usize, b: usize, corr: bool) -> BatchPlan {
    let mut p = BatchPlan::uniform(b);
    p.b0 = n;
    p.b0_hat = n;
    p.corr_f = corr;
    p.corr_j = corr;
    p
}

fn sizes(b: usize) -> StepBatches {
    StepBatches {
        b1: b,
        b2: b,
        b1_hat: b,
        b2_hat: b,
    }
}

#[test]
fn full_initial_batch_is_exact_mean() {
    let toy = Toy::new(7, 4);
    let x0 = [0.3, -0.2, 0.5, 1.0];
    let est = HybridEstimators::init(&toy, &x0, &plan(7, 2, true), 5).unwrap();
    assert_eq!(est.f, batch_value(&toy, &x0, &full_batch(7)));
    assert_eq!(est.j, batch_jacobian(&toy, &x0, &full_batch(7)));
    assert_eq!(est.j.len(), 2 * 4);
    assert_eq!(est.counters.fn_evals, 7);
    assert_eq!(est.counters.jac_evals, 7);
}

#[test]
fn single_sample_init() {
    let toy = Toy::new(1, 3);
    let x0 = [1.0, 2.0, 3.0];
    let est = HybridEstimators::init(&toy, &x0, &BatchPlan::uniform(1), 0).unwrap();
    assert_eq!(est.f, toy.sample_value(&x0, 0));
}

#[test]
fn init_is_deterministic() {
    let toy = Toy::new(10, 3);
    let p = {
        let mut p = BatchPlan::uniform(3);
        p.b0 = 4;
        p.b0_hat = 5;
        p
    };
    let a = HybridEstimators::init(&toy, &[0.1, 0.2, 0.3], &p, 42).unwrap();
    let b = HybridEstimators::init(&toy, &[0.1, 0.2, 0.3], &p, 42).unwrap();
    assert_eq!(a.f, b.f);
    assert_eq!(a.j, b.j);
    let c = HybridEstimators::init(&toy, &[0.1, 0.2, 0.3], &p, 43).unwrap();
    assert!(a.f != c.f || a.j != c.j);
}

#[test]
fn oversized_batch_is_config_error() {
    let toy = Toy::new(5, 2);
    let mut p = BatchPlan::uniform(2);
    p.b0 = 6;
    assert!(matches!(
        HybridEstimators::init(&toy, &[0.0, 0.0], &p, 0),
        Err(Error::InvalidConfig(_))
    ));
    let mut p = BatchPlan::uniform(2);
    p.b2 = 3;
    assert!(matches!(
        HybridEstimators::init(&toy, &[0.0, 0.0], &p, 0),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn beta_zero_full_batch_is_exact() {
    let toy = Toy::new(6, 3);
    for corr in [true, false] {
        let mut est = HybridEstimators::init(&toy, &[0.0; 3], &plan(6, 6, corr), 1).unwrap();
        let x1 = [0.4, -1.0, 0.7];
        est.update(&toy, &x1, 0.0, 0.0, sizes(6)).unwrap();
        assert_eq!(est.f, batch_value(&toy, &x1, &full_batch(6)));
        assert_eq!(est.j, batch_jacobian(&toy, &x1, &full_batch(6)));
    }
}

#[test]
fn beta_one_is_sarah() {
    let toy = Toy::new(8, 3);
    let mut est = HybridEstimators::init(&toy, &[0.1; 3], &plan(8, 3, true), 9).unwrap();
    let mut f_sum = est.f.clone();
    let mut j_sum = est.j.clone();
    for t in 1..=6 {
        let prev = est.clone();
        let x: Vec<f64> = (0..3).map(|j| 0.1 + 0.2 * (t * (j + 1)) as f64).collect();
        est.update(&toy, &x, 1.0, 1.0, sizes(3)).unwrap();
        for (acc, (a, b)) in f_sum.iter_mut().zip(est.f.iter().zip(&prev.f)) {
            *acc += a - b;
        }
        for (acc, (a, b)) in j_sum.iter_mut().zip(est.j.iter().zip(&prev.j)) {
            *acc += a - b;
        }
    }
    // J̃_T = J̃_0 + Σ_t (J̃_t − J̃_{t−1})
    assert!(max_rel(&est.f, &f_sum) <= 1e-12);
    assert!(max_rel(&est.j, &j_sum) <= 1e-12);
}

#[test]
fn sarah_with_full_batches_tracks_exact_values() {
    let toy = Toy::new(5, 2);
    let mut est = HybridEstimators::init(&toy, &[0.0, 0.0], &plan(5, 5, true), 2).unwrap();
    let mut x_prev = vec![0.0, 0.0];
    let mut f_direct = batch_value(&toy, &x_prev, &full_batch(5));
    for t in 1..=10 {
        let x = vec![0.1 * t as f64, -0.05 * t as f64];
        est.update(&toy, &x, 1.0, 1.0, sizes(5)).unwrap();
        let inc: Vec<f64> = batch_value(&toy, &x, &full_batch(5))
            .iter()
            .zip(batch_value(&toy, &x_prev, &full_batch(5)))
            .map(|(a, b)| a - b)
            .collect();
        for k in 0..2 {
            f_direct[k] += inc[k];
        }
        x_prev = x;
    }
    assert!(max_rel(&est.f, &f_direct) <= 1e-12);
    assert!(max_rel(&est.f, &batch_value(&toy, &x_prev, &full_batch(5))) <= 1e-12);
}

#[test]
fn half_weight_with_shared_full_batch() {
    let toy = Toy::new(3, 2);
    let x0 = [0.2, -0.3];
    let x1 = [0.9, 0.4];
    let mut est = HybridEstimators::init(&toy, &x0, &plan(3, 3, true), 0).unwrap();
    let f_prev = est.f.clone();
    est.update(&toy, &x1, 0.5, 0.5, sizes(3)).unwrap();
    // 0.5·F̃_{t−1} + 0.5·F(x_{t−1}) + (F(x_t) − F(x_{t−1})) by direct arithmetic
    let mean = |x: &[f64]| -> Vec<f64> {
        let mut m = vec![0.0; 2];
        for i in 0..3 {
            let v = toy.sample_value(x, i);
            m[0] += v[0] / 3.0;
            m[1] += v[1] / 3.0;
        }
        m
    };
    let (fa, fb) = (mean(&x0), mean(&x1));
    let expected: Vec<f64> = (0..2)
        .map(|k| 0.5 * f_prev[k] + 0.5 * fa[k] + (fb[k] - fa[k]))
        .collect();
    assert!(
        max_rel(&est.f, &expected) <= 1e-12,
        "{:?} vs {expected:?}",
        est.f
    );
}

#[test]
fn linear_component_keeps_constant_jacobian_row() {
    let prob = PortfolioProblem::new(synthetic_returns(10, 3, 0), 0.2, 0.01).unwrap();
    let mut p = BatchPlan::uniform(4);
    p.b0_hat = 10;
    let est = HybridEstimators::init(&prob, &[0.0; 3], &p, 3).unwrap();
    let row0 = est.j[..3].to_vec();
    // β̂ = 1 steps leave the mean row intact
    let mut est = HybridEstimators::init(&prob, &[0.0; 3], &p, 3).unwrap();
    for t in 1..5 {
        est.update(&prob, &[0.2 * t as f64, 0.0, -0.1], 0.5, 1.0, sizes(4))
            .unwrap();
        assert_eq!(&est.j[..3], &row0[..]);
    }
    // Identical periods: the row is the same constant for every sample, so
    // any β̂ keeps it (the correction term is exactly zero).
    let same = Matrix::from_rows(&vec![vec![0.5, -1.0, 2.0]; 10]);
    let prob = PortfolioProblem::new(same, 0.2, 0.01).unwrap();
    let mut est = HybridEstimators::init(&prob, &[0.0; 3], &p, 3).unwrap();
    for (t, beta) in [0.0, 0.3, 1.0, 0.7].iter().enumerate() {
        est.update(&prob, &[0.1 * t as f64; 3], 0.9, *beta, sizes(4))
            .unwrap();
        assert!(max_rel(&est.j[..3], &[0.5, -1.0, 2.0]) <= 1e-15);
    }
}

#[test]
fn gradient_estimate_matches_differences() {
    let toy = Toy::new(6, 4);
    let outer = OuterFunction::MaxForm(
        MaxFormOuter::new(
            Matrix::identity(2),
            DualFunction::L1BallIndicator { radius: 1.0 },
            vec![0.0; 2],
        )
        .unwrap(),
    );
    let x = [0.3, -0.4, 0.8, 0.1];
    let mut est = HybridEstimators::init(&toy, &x, &plan(6, 6, false), 0).unwrap();
    est.update(&toy, &x, 0.0, 0.0, sizes(6)).unwrap();
    let v = est.gradient_estimate(&outer, 0.5).unwrap();
    let fd = fd_gradient(
        |z| {
            outer
                .value(&batch_value(&toy, z, &full_batch(6)), 0.5)
                .unwrap()
        },
        &x,
        1e-5,
    );
    assert!(max_rel(&v, &fd) <= 1e-5, "{v:?} vs {fd:?}");
}

#[test]
fn scalar_linear_outer_is_sgd() {
    let prob = HalfSq {
        centers: vec![vec![1.0, 2.0], vec![-1.0, 0.0], vec![0.5, 0.5]],
    };
    let outer = OuterFunction::smooth(LinearOuter { weights: vec![1.0] });
    let x = [0.2, 0.7];
    let est = HybridEstimators::init(&prob, &x, &plan(3, 1, true), 0).unwrap();
    let v = est.gradient_estimate(&outer, 0.0).unwrap();
    let mut mean = vec![0.0; 2];
    for i in 0..3 {
        let g = prob.sample_jacobian(&x, i)[0].to_dense(2);
        mean[0] += g[0];
        mean[1] += g[1];
    }
    mean.iter_mut().for_each(|m| *m /= 3.0);
    assert!(max_rel(&v, &mean) <= 1e-15);
}

#[test]
fn zero_jacobian_gives_zero_direction() {
    assert_eq!(jt_mul(&[0.0; 6], 2, 3, &[1.0, -2.0]), vec![0.0; 3]);
}

#[test]
fn correction_free_estimator_is_unbiased() {
    let toy = Toy::new(5, 2);
    let x1 = [0.6, -0.8];
    let exact = batch_value(&toy, &x1, &full_batch(5));
    let mut p = BatchPlan::uniform(2);
    p.corr_f = false;
    p.corr_j = false;
    let reps = 10_000;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for seed in 0..reps {
        let mut est = HybridEstimators::init(&toy, &[0.0, 0.0], &p, seed).unwrap();
        est.update(&toy, &x1, 0.0, 0.0, sizes(2)).unwrap();
        for k in 0..2 {
            sum[k] += est.f[k];
            sq[k] += est.f[k] * est.f[k];
        }
    }
    for k in 0..2 {
        let mean = sum[k] / reps as f64;
        let var = sq[k] / reps as f64 - mean * mean;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - exact[k]).abs() <= 3.0 * se + 1e-15,
            "k={k}: {mean} vs {} (se {se})",
            exact[k]
        );
    }
}

#[test]
fn storm_saves_b1_evaluations() {
    let toy = Toy::new(10, 3);
    let b = 4;
    let mut corr = HybridEstimators::init(&toy, &[0.0; 3], &plan(10, b, true), 0).unwrap();
    let mut ind = HybridEstimators::init(&toy, &[0.0; 3], &plan(10, b, false), 0).unwrap();
    let (c0, i0) = (corr.counters, ind.counters);
    corr.update(&toy, &[0.1; 3], 0.5, 0.5, sizes(b)).unwrap();
    ind.update(&toy, &[0.1; 3], 0.5, 0.5, sizes(b)).unwrap();
    let dc = corr.counters.fn_evals - c0.fn_evals;
    let di = ind.counters.fn_evals - i0.fn_evals;
    assert_eq!(dc, 2 * b as u64);
    assert_eq!(di, 3 * b as u64);
    assert_eq!(di - dc, b as u64);
    assert_eq!(corr.counters.jac_evals - c0.jac_evals, 2 * b as u64);
    assert_eq!(ind.counters.jac_evals - i0.jac_evals, 3 * b as u64);
}

#[test]
fn correlated_mode_needs_equal_batches() {
    let toy = Toy::new(10, 3);
    let mut est = HybridEstimators::init(&toy, &[0.0; 3], &plan(10, 2, true), 0).unwrap();
    let bad = StepBatches {
        b1: 2,
        b2: 3,
        b1_hat: 2,
        b2_hat: 2,
    };
    assert!(matches!(
        est.update(&toy, &[0.1; 3], 0.5, 0.5, bad),
        Err(Error::InvalidConfig(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trajectories_are_deterministic(seed in 0u64..1000, beta in 0.0f64..=1.0, corr in any::<bool>()) {
        let toy = Toy::new(9, 3);
        let p = plan(9, 3, corr);
        let run = || {
            let mut est = HybridEstimators::init(&toy, &[0.0; 3], &p, seed).unwrap();
            for t in 1..5 {
                est.update(&toy, &[0.1 * t as f64, 0.0, -0.2], beta, beta, sizes(3)).unwrap();
            }
            (est.f, est.j, est.counters)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn full_batch_estimates_stay_exact_for_any_beta(beta in 0.0f64..=1.0) {
        let toy = Toy::new(4, 2);
        let mut est = HybridEstimators::init(&toy, &[0.0, 0.0], &plan(4, 4, true), 0).unwrap();
        let mut x = vec![0.0, 0.0];
        for t in 1..6 {
            x = vec![0.3 * t as f64, -0.1 * t as f64];
            est.update(&toy, &x, beta, beta, sizes(4)).unwrap();
        }
        prop_assert!(max_rel(&est.f, &batch_value(&toy, &x, &full_batch(4))) <= 1e-12);
        prop_assert!(max_rel(&est.j, &batch_jacobian(&toy, &x, &full_batch(4))) <= 1e-12);
    }
}
