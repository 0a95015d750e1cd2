//! Approximate KKT point construction from a solver output and its residual.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::estimators::BatchSampler;
use crate::outer::OuterFunction;
use crate::problem::{batch_jacobian_tmul, batch_value, full_batch, CompositionProblem};
use crate::regularizer::Regularizer;

/// Batch sizes for `F̃(x̄)`, `J̃(x̄)ᵀ∇φγ(F̃(x̄))` and `F̃(x̃*)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KktConfig {
    pub b_t: usize,
    pub b_hat_t: usize,
    pub b_tilde_t: usize,
}

impl KktConfig {
    pub fn full(n: usize) -> Self {
        Self {
            b_t: n,
            b_hat_t: n,
            b_tilde_t: n,
        }
    }

    /// `b_T = ⌈σ_F²/((μ_ψ+γ_T)²ε²)⌉`, `b̂_T = ⌈σ_J²/ε²⌉`, `b̃_T = ⌈σ_F²/ε²⌉`,
    /// clamped to `[1, n]`.
    pub fn from_variances(
        sigma_f: f64,
        sigma_j: f64,
        mu_psi: f64,
        gamma_t: f64,
        eps: f64,
        n: usize,
    ) -> Result<Self> {
        if !(eps > 0.0) {
            return config("target accuracy must be positive");
        }
        if !(mu_psi + gamma_t > 0.0) {
            return config("KKT batch sizes need gamma_T > 0 when psi is not strongly convex");
        }
        let r = |v: f64| crate::estimators::round_batch(v, n);
        Ok(Self {
            b_t: r(sigma_f.powi(2) / ((mu_psi + gamma_t).powi(2) * eps * eps)),
            b_hat_t: r(sigma_j.powi(2) / (eps * eps)),
            b_tilde_t: r(sigma_f.powi(2) / (eps * eps)),
        })
    }

    fn validate(&self, n: usize) -> Result<()> {
        for (name, b) in [
            ("b_T", self.b_t),
            ("b_hat_T", self.b_hat_t),
            ("b_tilde_T", self.b_tilde_t),
        ] {
            if b == 0 || b > n {
                return config(format!("KKT batch {name} = {b} must lie in [1, {n}]"));
            }
        }
        Ok(())
    }
}

fn draw(sampler: &mut BatchSampler, size: usize, n: usize) -> Result<Vec<usize>> {
    if size == n {
        Ok(full_batch(n))
    } else {
        sampler.draw(size)
    }
}

/// `x̃* = prox_{η̄R}(x̄ − η̄ ∇̃Φγ(x̄))`, `ỹ* = y*_γ(F̃(x̃*))`.
#[allow(clippy::too_many_arguments)]
pub fn kkt_construct<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    reg: &Regularizer,
    x_bar: &[f64],
    eta_bar: f64,
    gamma_t: f64,
    kcfg: &KktConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mf = outer.as_max_form().ok_or_else(|| {
        Error::NotImplemented("KKT construction needs a max-form outer function".into())
    })?;
    if gamma_t == 0.0 && mf.psi.strong_convexity() == 0.0 {
        return config("gamma_T = 0 requires a strongly convex psi");
    }
    if !(eta_bar > 0.0) {
        return config("step eta_bar must be positive");
    }
    let n = problem.num_samples();
    kcfg.validate(n)?;
    let mut sampler = BatchSampler::new(seed, n, false);
    let f_bar = batch_value(problem, x_bar, &draw(&mut sampler, kcfg.b_t, n)?);
    let w = outer.grad(&f_bar, gamma_t)?;
    let g = batch_jacobian_tmul(problem, x_bar, &draw(&mut sampler, kcfg.b_hat_t, n)?, &w);
    let trial: Vec<f64> = x_bar
        .iter()
        .zip(&g)
        .map(|(x, gi)| x - eta_bar * gi)
        .collect();
    let x_star = reg.prox(&trial, eta_bar);
    let f_star = batch_value(problem, &x_star, &draw(&mut sampler, kcfg.b_tilde_t, n)?);
    let y_star = mf.y_star(&f_star, gamma_t)?;
    Ok((x_star, y_star))
}

/// `E(x, y) = dist(0, F'(x)ᵀKy + ∂R(x)) + dist(0, KᵀF(x) − ∂ψ(y))` with `F`, `F'`
/// averaged over a mega-batch (full data when `None`).
pub fn kkt_residual<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    reg: &Regularizer,
    x: &[f64],
    y: &[f64],
    mega_batch: Option<usize>,
    seed: u64,
) -> Result<f64> {
    let mf = outer.as_max_form().ok_or_else(|| {
        Error::NotImplemented("KKT residual needs a max-form outer function".into())
    })?;
    let n = problem.num_samples();
    let batch = match mega_batch {
        None => full_batch(n),
        Some(m) if m == 0 || m > n => {
            return config(format!("mega batch {m} must lie in [1, {n}]"))
        }
        Some(m) => draw(&mut BatchSampler::new(seed, n, false), m, n)?,
    };
    let ky = mf.k.mul_vec(y);
    let g = batch_jacobian_tmul(problem, x, &batch, &ky);
    let primal = reg.subdiff_dist(x, &g)?;
    let u = mf.k.tmul_vec(&batch_value(problem, x, &batch));
    let dual = mf.subdiff_dist_psi(y, &u)?;
    Ok(primal + dual)
}

/// Right-hand side `(13/3 + (8/3) M_F‖K‖² + c2 D_ψ)·ε̂`.
pub fn kkt_bound_rhs(m_f: f64, k_norm: f64, c2: f64, d_psi: f64, eps_hat: f64) -> f64 {
    (13.0 / 3.0 + 8.0 / 3.0 * m_f * k_norm * k_norm + c2 * d_psi) * eps_hat
}

/// Smallest admissible `c2` for `γ_T ≤ c2·ε̂`.
pub fn minimal_c2(gamma_t: f64, eps_hat: f64) -> f64 {
    if gamma_t == 0.0 {
        0.0
    } else {
        gamma_t / eps_hat
    }
}
