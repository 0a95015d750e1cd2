mod common;

use common::{max_rel, Shift, Toy};
use hscg_core::kkt::{kkt_bound_rhs, kkt_construct, kkt_residual, minimal_c2, KktConfig};
use hscg_core::linalg::{norm, Matrix};
use hscg_core::metrics::MetricsEvaluator;
use hscg_core::outer::HalfSquaredNorm;
use hscg_core::problem::{batch_jacobian_tmul, batch_value, full_batch};
use hscg_core::*;
use proptest::prelude::*;

fn max_form(k: Matrix, psi: DualFunction) -> OuterFunction {
    let d = k.cols;
    OuterFunction::MaxForm(MaxFormOuter::new(k, psi, vec![0.0; d]).unwrap())
}

/// `F(x) = x` on one sample, `K = 1`, `ψ` the indicator of `[−1, 1]`.
fn scalar_instance() -> (Shift, OuterFunction) {
    let prob = Shift {
        centers: vec![vec![0.0]],
    };
    (
        prob,
        max_form(
            Matrix::identity(1),
            DualFunction::L1BallIndicator { radius: 1.0 },
        ),
    )
}

#[test]
fn scalar_instance_exact_pair() {
    let (prob, outer) = scalar_instance();
    let e = kkt_residual(&prob, &outer, &Regularizer::Zero, &[0.0], &[0.0], None, 0).unwrap();
    assert!(e <= 1e-10);
}

#[test]
fn scalar_instance_hand_values() {
    // R = 2|x|: at x = 0 the primal distance is max(|y| − 2, 0) = 0.
    let (prob, outer) = scalar_instance();
    let reg = Regularizer::L1 { lambda: 2.0 };
    let e = |x: f64, y: f64| kkt_residual(&prob, &outer, &reg, &[x], &[y], None, 0).unwrap();
    assert!(e(0.0, 0.5) <= 1e-10);
    assert!(e(0.0, 1.0) <= 1e-10);
    // x = 1: |0.5 + 2| + |1 − 0| with y interior.
    assert!((e(1.0, 0.5) - 3.5).abs() <= 1e-12);
    // y = 1 on the boundary absorbs any positive u = x.
    assert!((e(1.0, 1.0) - 3.0).abs() <= 1e-12);
}

#[test]
fn interior_dual_term_is_norm_of_ktf() {
    let prob = Toy::new(6, 3);
    let k = Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0]]);
    let outer = max_form(k.clone(), DualFunction::L1BallIndicator { radius: 1.0 });
    let x = vec![0.3, -0.7, 1.1];
    let y = vec![0.2, -0.1];
    let all = full_batch(6);
    let ky = k.mul_vec(&y);
    let primal = norm(&batch_jacobian_tmul(&prob, &x, &all, &ky));
    let dual = norm(&k.tmul_vec(&batch_value(&prob, &x, &all)));
    let e = kkt_residual(&prob, &outer, &Regularizer::Zero, &x, &y, None, 0).unwrap();
    assert!((e - (primal + dual)).abs() <= 1e-12 * (primal + dual));
}

#[test]
fn stationary_point_of_strongly_convex_instance() {
    // φ0(u) = ½‖u‖² near the origin, so x* is the mean center.
    let centers = vec![
        vec![0.1, -0.2, 0.05],
        vec![0.3, 0.0, -0.15],
        vec![-0.1, 0.2, 0.1],
    ];
    let mean: Vec<f64> = (0..3)
        .map(|j| centers.iter().map(|c| c[j]).sum::<f64>() / 3.0)
        .collect();
    let prob = Shift { centers };
    let outer = max_form(
        Matrix::identity(3),
        DualFunction::L2BallQuadratic { radius: 5.0 },
    );
    let (xs, ys) = kkt_construct(
        &prob,
        &outer,
        &Regularizer::Zero,
        &mean,
        0.5,
        0.0,
        &KktConfig::full(3),
        1,
    )
    .unwrap();
    let e = kkt_residual(&prob, &outer, &Regularizer::Zero, &xs, &ys, None, 0).unwrap();
    assert!(e <= 1e-6, "residual {e}");
}

#[test]
fn construct_without_regularizer_is_gradient_step() {
    let prob = Toy::new(8, 3);
    let outer = max_form(
        Matrix::identity(2),
        DualFunction::L1BallIndicator { radius: 1.0 },
    );
    let x = vec![0.4, 0.1, -0.2];
    let (eta, gamma) = (0.3, 0.25);
    let (xs, ys) = kkt_construct(
        &prob,
        &outer,
        &Regularizer::Zero,
        &x,
        eta,
        gamma,
        &KktConfig::full(8),
        0,
    )
    .unwrap();
    let g = MetricsEvaluator::new(8, None, 0)
        .unwrap()
        .gradient(&prob, &outer, &x, gamma)
        .unwrap();
    let expected: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
    assert_eq!(xs, expected);
    let mf = outer.as_max_form().unwrap();
    assert_eq!(
        ys,
        mf.y_star(&batch_value(&prob, &xs, &full_batch(8)), gamma)
            .unwrap()
    );
}

#[test]
fn zero_smoothing_needs_strong_convexity() {
    let prob = Toy::new(5, 2);
    let outer = max_form(
        Matrix::identity(2),
        DualFunction::L1BallIndicator { radius: 1.0 },
    );
    let r = kkt_construct(
        &prob,
        &outer,
        &Regularizer::Zero,
        &[0.0, 0.0],
        0.1,
        0.0,
        &KktConfig::full(5),
        0,
    );
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}

#[test]
fn smooth_outer_is_not_supported() {
    let prob = Toy::new(5, 2);
    let outer = OuterFunction::smooth(HalfSquaredNorm);
    let r = kkt_construct(
        &prob,
        &outer,
        &Regularizer::Zero,
        &[0.0, 0.0],
        0.1,
        0.1,
        &KktConfig::full(5),
        0,
    );
    assert!(matches!(r, Err(Error::NotImplemented(_))));
    let e = kkt_residual(
        &prob,
        &outer,
        &Regularizer::Zero,
        &[0.0, 0.0],
        &[0.0, 0.0],
        None,
        0,
    );
    assert!(matches!(e, Err(Error::NotImplemented(_))));
}

#[test]
fn batch_sizes_outside_range_are_rejected() {
    let prob = Toy::new(5, 2);
    let outer = max_form(
        Matrix::identity(2),
        DualFunction::L1BallIndicator { radius: 1.0 },
    );
    let kcfg = KktConfig {
        b_t: 6,
        b_hat_t: 5,
        b_tilde_t: 5,
    };
    let r = kkt_construct(
        &prob,
        &outer,
        &Regularizer::Zero,
        &[0.0, 0.0],
        0.1,
        0.5,
        &kcfg,
        0,
    );
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}

#[test]
fn variance_batch_sizes_round_up_and_clamp() {
    let k = KktConfig::from_variances(2.0, 3.0, 0.0, 0.5, 0.5, 1000).unwrap();
    // σ_F²/((μ+γ)²ε²) = 4/(0.25·0.25) = 64, σ_J²/ε² = 36, σ_F²/ε² = 16
    assert_eq!(
        k,
        KktConfig {
            b_t: 64,
            b_hat_t: 36,
            b_tilde_t: 16
        }
    );
    let k = KktConfig::from_variances(2.0, 3.0, 0.0, 0.5, 0.01, 100).unwrap();
    assert_eq!(k, KktConfig::full(100));
    assert!(KktConfig::from_variances(1.0, 1.0, 0.0, 0.0, 0.1, 10).is_err());
}

#[test]
fn bound_rhs_arithmetic() {
    let rhs = kkt_bound_rhs(2.0, 1.0, 3.0, 1.0, 0.1);
    assert!((rhs - (13.0 / 3.0 + 16.0 / 3.0 + 3.0) * 0.1).abs() <= 1e-15);
    assert_eq!(minimal_c2(0.0, 0.5), 0.0);
    assert_eq!(minimal_c2(0.2, 0.5), 0.4);
}

#[test]
fn sampled_construction_is_deterministic() {
    let prob = Toy::new(40, 3);
    let outer = max_form(
        Matrix::identity(2),
        DualFunction::L1BallIndicator { radius: 1.0 },
    );
    let kcfg = KktConfig {
        b_t: 10,
        b_hat_t: 12,
        b_tilde_t: 8,
    };
    let a = kkt_construct(
        &prob,
        &outer,
        &Regularizer::Zero,
        &[0.1, 0.2, 0.3],
        0.2,
        0.3,
        &kcfg,
        7,
    )
    .unwrap();
    let b = kkt_construct(
        &prob,
        &outer,
        &Regularizer::Zero,
        &[0.1, 0.2, 0.3],
        0.2,
        0.3,
        &kcfg,
        7,
    )
    .unwrap();
    assert_eq!(a, b);
    let full = kkt_construct(
        &prob,
        &outer,
        &Regularizer::Zero,
        &[0.1, 0.2, 0.3],
        0.2,
        0.3,
        &KktConfig::full(40),
        7,
    )
    .unwrap();
    assert!(max_rel(&a.0, &full.0) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn residual_is_nonnegative(x in prop::collection::vec(-2.0f64..2.0, 3), y in prop::collection::vec(-1.0f64..1.0, 2), lambda in 0.0f64..1.0) {
        let prob = Toy::new(7, 3);
        let outer = max_form(Matrix::identity(2), DualFunction::L1BallIndicator { radius: 1.0 });
        let l1: f64 = y.iter().map(|v| v.abs()).sum();
        let y: Vec<f64> = if l1 > 1.0 { y.iter().map(|v| v / l1).collect() } else { y };
        let e = kkt_residual(&prob, &outer, &Regularizer::L1 { lambda }, &x, &y, None, 0).unwrap();
        prop_assert!(e >= 0.0 && e.is_finite());
    }
}
