//! Central finite-difference checks of the sample Jacobians, the outer
//! gradient and the full-batch gradient estimate.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{BatchPlan, HybridEstimators};
use crate::linalg::norm_inf;
use crate::outer::OuterFunction;
use crate::problem::{batch_value, full_batch, CompositionProblem};

pub const DEFAULT_STEP: f64 = 1e-5;

/// `max_i |a_i − b_i| / max(‖a‖∞, ‖b‖∞)`, guarded against zero vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = norm_inf(a).max(norm_inf(b)).max(1e-12);
    diff / scale
}

/// Central differences of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = xp[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn failing(&self, tol: f64) -> Vec<&CheckResult> {
        self.checks
            .iter()
            .filter(|c| !(c.max_rel_err <= tol))
            .collect()
    }
}

/// Compares every sample Jacobian row with central differences of
/// `sample_value`, returning the worst relative error over `samples`.
pub fn check_sample_jacobians<P: CompositionProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    samples: &[usize],
    h: f64,
) -> f64 {
    let (p, q) = (problem.dim(), problem.range_dim());
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for &i in samples {
        let rows = problem.sample_jacobian(x, i);
        let analytic: Vec<Vec<f64>> = rows.iter().map(|r| r.to_dense(p)).collect();
        let mut fd = vec![vec![0.0; p]; q];
        for j in 0..p {
            let xj = xp[j];
            xp[j] = xj + h;
            let fp = problem.sample_value(&xp, i);
            xp[j] = xj - h;
            let fm = problem.sample_value(&xp, i);
            xp[j] = xj;
            for k in 0..q {
                fd[k][j] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
        for k in 0..q {
            worst = worst.max(relative_error(&analytic[k], &fd[k]));
        }
    }
    worst
}

/// `∇φγ` against central differences of `φγ` at each point of `us`.
pub fn check_outer_gradient(
    outer: &OuterFunction,
    us: &[Vec<f64>],
    gamma: f64,
    h: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for u in us {
        let g = outer.grad(u, gamma)?;
        let fd = fd_gradient(|v| outer.value(v, gamma).unwrap_or(f64::NAN), u, h);
        worst = worst.max(relative_error(&g, &fd));
    }
    Ok(worst)
}

/// Full-batch `v = J(x)ᵀ∇φγ(F(x))` built through the estimators with
/// `β = β̂ = 0` and `b2 = b̂2 = N`, against central differences of
/// `x ↦ φγ(F(x))`.
pub fn check_full_gradient<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    x: &[f64],
    gamma: f64,
    h: f64,
) -> Result<f64> {
    let n = problem.num_samples();
    let mut plan = BatchPlan::uniform(n);
    plan.corr_f = false;
    plan.corr_j = false;
    let mut est = HybridEstimators::init(problem, x, &plan, 0)?;
    let sizes = (&plan).into();
    est.update(problem, x, 0.0, 0.0, sizes)?;
    let v = est.gradient_estimate(outer, gamma)?;
    let all = full_batch(n);
    let fd = fd_gradient(
        |z| {
            outer
                .value(&batch_value(problem, z, &all), gamma)
                .unwrap_or(f64::NAN)
        },
        x,
        h,
    );
    Ok(relative_error(&v, &fd))
}

/// Runs all three checks at `x` with `samples` for the per-sample test.
pub fn gradcheck<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    x: &[f64],
    samples: &[usize],
    outer_points: &[Vec<f64>],
    gamma: f64,
    h: f64,
) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::default();
    report.checks.push(CheckResult {
        name: "sample_jacobian".into(),
        max_rel_err: check_sample_jacobians(problem, x, samples, h),
    });
    report.checks.push(CheckResult {
        name: "outer_gradient".into(),
        max_rel_err: check_outer_gradient(outer, outer_points, gamma, h)?,
    });
    report.checks.push(CheckResult {
        name: "full_gradient".into(),
        max_rel_err: check_full_gradient(problem, outer, x, gamma, h)?,
    });
    Ok(report)
}
