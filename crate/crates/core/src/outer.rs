//! Outer functions `φ` of the compositional objective `φ(E[F(x, ξ)]) + R(x)`.
//!
//! Two shapes are supported. A smooth outer function supplies its value and
//! gradient directly. A max-form outer function is
//! `φ0(u) = max_y { ⟨u, K y⟩ − ψ(y) }` and is evaluated through its smoothed
//! version `φγ(u) = max_y { ⟨u, K y⟩ − ψ(y) − γ b(y) }` with the quadratic
//! prox function `b(y) = ½‖y − ẏ‖²`. The maximiser `y*_γ(u)` is a single
//! proximal step on `ψ`, and `∇φγ(u) = K y*_γ(u)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{dot, norm, norm1, norm_inf, norm_sq, Matrix};
use crate::prox::{project_l1_ball, project_l2_ball};

/// Relative tolerance used to decide whether a dual point sits on the
/// boundary of `dom ψ`.
pub const BOUNDARY_REL_TOL: f64 = 1e-9;
/// Absolute slack accepted when checking `y ∈ dom ψ`.
pub const DOMAIN_ABS_TOL: f64 = 1e-12;

/// A smooth outer function with a directly computable gradient.
pub trait SmoothOuter: Send + Sync {
    fn value(&self, u: &[f64]) -> f64;
    fn grad(&self, u: &[f64]) -> Vec<f64>;
    /// Lipschitz constant of `grad`.
    fn smoothness(&self) -> f64;
    /// Bound on `‖grad(u)‖` over the region of interest, if one is known
    /// globally. Returning `None` makes constant estimation sample it.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
    fn name(&self) -> &str {
        "smooth"
    }
}

/// `φ(u) = ⟨c, u⟩`.
#[derive(Debug, Clone)]
pub struct LinearOuter {
    pub weights: Vec<f64>,
}

impl SmoothOuter for LinearOuter {
    fn value(&self, u: &[f64]) -> f64 {
        dot(&self.weights, u)
    }
    fn grad(&self, _u: &[f64]) -> Vec<f64> {
        self.weights.clone()
    }
    fn smoothness(&self) -> f64 {
        0.0
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(norm(&self.weights))
    }
    fn name(&self) -> &str {
        "linear"
    }
}

/// `φ(u) = ½‖u‖²`.
#[derive(Debug, Clone, Copy)]
pub struct HalfSquaredNorm;

impl SmoothOuter for HalfSquaredNorm {
    fn value(&self, u: &[f64]) -> f64 {
        0.5 * norm_sq(u)
    }
    fn grad(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn smoothness(&self) -> f64 {
        1.0
    }
    fn name(&self) -> &str {
        "half-squared-norm"
    }
}

/// The dual function `ψ` of a max-form outer function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualFunction {
    /// Indicator of `{‖y‖₁ ≤ radius}`; `φ0(u) = radius·‖Kᵀu‖_∞`.
    L1BallIndicator { radius: f64 },
    /// `½‖y‖² + indicator of {‖y‖₂ ≤ radius}`, strongly convex with modulus 1.
    L2BallQuadratic { radius: f64 },
}

impl DualFunction {
    /// Strong-convexity modulus, normalised to 1 when positive.
    pub fn strong_convexity(&self) -> f64 {
        match self {
            DualFunction::L1BallIndicator { .. } => 0.0,
            DualFunction::L2BallQuadratic { .. } => 1.0,
        }
    }

    /// Bound on `‖y‖` over `dom ψ`.
    pub fn domain_bound(&self) -> f64 {
        match *self {
            DualFunction::L1BallIndicator { radius } | DualFunction::L2BallQuadratic { radius } => {
                radius
            }
        }
    }

    fn value(&self, y: &[f64]) -> f64 {
        match *self {
            DualFunction::L1BallIndicator { radius } => {
                if norm1(y) <= radius + DOMAIN_ABS_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            DualFunction::L2BallQuadratic { radius } => {
                if norm(y) <= radius + DOMAIN_ABS_TOL {
                    0.5 * norm_sq(y)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxFormOuter {
    pub k: Matrix,
    pub psi: DualFunction,
    /// Prox center `ẏ`.
    pub center: Vec<f64>,
    k_norm: f64,
}

impl MaxFormOuter {
    pub fn new(k: Matrix, psi: DualFunction, center: Vec<f64>) -> Result<Self> {
        if center.len() != k.cols {
            return Err(Error::InvalidConfig(format!(
                "prox center has length {}, K has {} columns",
                center.len(),
                k.cols
            )));
        }
        let k_norm = k.spectral_norm(1e-8);
        Ok(Self {
            k,
            psi,
            center,
            k_norm,
        })
    }

    pub fn dual_dim(&self) -> usize {
        self.k.cols
    }

    /// Spectral norm `‖K‖`.
    pub fn k_norm(&self) -> f64 {
        self.k_norm
    }

    /// `B_ψ = sup { b(y) : y ∈ dom ψ }`.
    pub fn b_sup(&self) -> f64 {
        match self.psi {
            DualFunction::L1BallIndicator { radius } => {
                // b is convex, so the sup sits on a vertex ±r e_i.
                let base = norm_sq(&self.center);
                let worst = self
                    .center
                    .iter()
                    .map(|c| base - c * c + (radius + c.abs()).powi(2))
                    .fold(0.0_f64, f64::max);
                0.5 * worst
            }
            DualFunction::L2BallQuadratic { radius } => 0.5 * (radius + norm(&self.center)).powi(2),
        }
    }

    /// `D_ψ = max { ‖∇b(y)‖ : y ∈ dom ψ }`.
    pub fn grad_b_sup(&self) -> f64 {
        (2.0 * self.b_sup()).sqrt()
    }

    fn kt(&self, u: &[f64]) -> Vec<f64> {
        if self.k.is_identity() {
            u.to_vec()
        } else {
            self.k.tmul_vec(u)
        }
    }

    fn k_mul(&self, y: &[f64]) -> Vec<f64> {
        if self.k.is_identity() {
            y.to_vec()
        } else {
            self.k.mul_vec(y)
        }
    }

    /// The maximiser `y*_γ(u)`.
    pub fn y_star(&self, u: &[f64], gamma: f64) -> Result<Vec<f64>> {
        ensure_finite(u, "u")?;
        if u.len() != self.k.rows {
            return Err(Error::InvalidInput(format!(
                "u has length {}, expected {}",
                u.len(),
                self.k.rows
            )));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "smoothing parameter {gamma} must be finite and >= 0"
            )));
        }
        let w = self.kt(u);
        match self.psi {
            DualFunction::L1BallIndicator { radius } => {
                if gamma == 0.0 {
                    return Err(Error::InvalidConfig(
                        "gamma = 0 requires a strongly convex dual function".into(),
                    ));
                }
                let z: Vec<f64> = self
                    .center
                    .iter()
                    .zip(&w)
                    .map(|(c, wi)| c + wi / gamma)
                    .collect();
                Ok(project_l1_ball(&z, radius))
            }
            DualFunction::L2BallQuadratic { radius } => {
                // maximise ⟨w, y⟩ − ½‖y‖² − (γ/2)‖y − ẏ‖² over the ball; the
                // objective is isotropic so projecting the free maximiser is exact.
                let z: Vec<f64> = self
                    .center
                    .iter()
                    .zip(&w)
                    .map(|(c, wi)| (wi + gamma * c) / (1.0 + gamma))
                    .collect();
                Ok(project_l2_ball(&z, radius))
            }
        }
    }

    pub fn grad_phi_gamma(&self, u: &[f64], gamma: f64) -> Result<Vec<f64>> {
        let y = self.y_star(u, gamma)?;
        Ok(self.k_mul(&y))
    }

    pub fn phi_gamma_value(&self, u: &[f64], gamma: f64) -> Result<f64> {
        let y = self.y_star(u, gamma)?;
        Ok(self.objective_at(u, &y, gamma))
    }

    fn objective_at(&self, u: &[f64], y: &[f64], gamma: f64) -> f64 {
        let ky = self.k_mul(y);
        let b = 0.5
            * y.iter()
                .zip(&self.center)
                .map(|(a, c)| (a - c).powi(2))
                .sum::<f64>();
        dot(u, &ky) - self.psi.value(y) - gamma * b
    }

    /// Unsmoothed `φ0(u)`.
    pub fn phi0_value(&self, u: &[f64]) -> Result<f64> {
        ensure_finite(u, "u")?;
        match self.psi {
            DualFunction::L1BallIndicator { radius } => Ok(radius * norm_inf(&self.kt(u))),
            DualFunction::L2BallQuadratic { .. } => self.phi_gamma_value(u, 0.0),
        }
    }

    /// Distance from `u` to `∂ψ(y)`.
    pub fn subdiff_dist_psi(&self, y: &[f64], u: &[f64]) -> Result<f64> {
        ensure_finite(y, "y")?;
        ensure_finite(u, "u")?;
        if y.len() != u.len() || y.len() != self.dual_dim() {
            return Err(Error::InvalidInput(
                "dimension mismatch in subdiff_dist_psi".into(),
            ));
        }
        match self.psi {
            DualFunction::L1BallIndicator { radius } => {
                let l1 = norm1(y);
                if l1 > radius + DOMAIN_ABS_TOL {
                    return Err(Error::InvalidInput(format!(
                        "y is outside the L1 ball: ‖y‖₁ = {l1}"
                    )));
                }
                if l1 < radius * (1.0 - BOUNDARY_REL_TOL) {
                    return Ok(norm(u));
                }
                Ok(l1_normal_cone_dist(y, u, radius))
            }
            DualFunction::L2BallQuadratic { radius } => {
                let ny = norm(y);
                if ny > radius + DOMAIN_ABS_TOL {
                    return Err(Error::InvalidInput(format!(
                        "y is outside the L2 ball: ‖y‖ = {ny}"
                    )));
                }
                // ∂ψ(y) = y + N(y)
                let d: Vec<f64> = u.iter().zip(y).map(|(a, b)| a - b).collect();
                if ny < radius * (1.0 - BOUNDARY_REL_TOL) {
                    return Ok(norm(&d));
                }
                let t = dot(&d, y) / norm_sq(y);
                if t <= 0.0 {
                    Ok(norm(&d))
                } else {
                    Ok(d.iter()
                        .zip(y)
                        .map(|(di, yi)| (di - t * yi).powi(2))
                        .sum::<f64>()
                        .sqrt())
                }
            }
        }
    }
}

/// Distance from `u` to the normal cone of the L1 ball at a boundary point `y`:
/// `min_{t ≥ 0} Σ_supp (u_i − t s_i)² + Σ_off max(|u_i| − t, 0)²`, minimised
/// exactly over the pieces between consecutive off-support breakpoints.
fn l1_normal_cone_dist(y: &[f64], u: &[f64], radius: f64) -> f64 {
    let support_tol = DOMAIN_ABS_TOL * radius.max(1.0);
    let mut su = 0.0; // Σ_supp s_i u_i
    let mut k = 0usize;
    let mut off: Vec<f64> = Vec::new();
    for (&yi, &ui) in y.iter().zip(u) {
        if yi.abs() > support_tol {
            su += yi.signum() * ui;
            k += 1;
        } else {
            off.push(ui.abs());
        }
    }
    let h = |t: f64| -> f64 {
        let mut acc = 0.0;
        for (&yi, &ui) in y.iter().zip(u) {
            if yi.abs() > support_tol {
                acc += (ui - t * yi.signum()).powi(2);
            } else {
                acc += (ui.abs() - t).max(0.0).powi(2);
            }
        }
        acc
    };
    off.sort_unstable_by(|a, b| a.total_cmp(b));
    // Piece j covers [lo, hi] with every off-support magnitude ≥ hi active.
    let mut edges = vec![0.0];
    edges.extend(off.iter().copied());
    edges.push(f64::INFINITY);
    let mut best = h(0.0);
    let suffix_sum: Vec<f64> = {
        let mut s = vec![0.0; off.len() + 1];
        for i in (0..off.len()).rev() {
            s[i] = s[i + 1] + off[i];
        }
        s
    };
    for j in 0..edges.len() - 1 {
        let (lo, hi) = (edges[j], edges[j + 1]);
        if hi < lo {
            continue;
        }
        // active off-support entries: those with |u_i| ≥ hi, i.e. indices ≥ j
        let active = off.len() - j.min(off.len());
        let denom = (k + active) as f64;
        if denom == 0.0 {
            continue;
        }
        let t = ((su + suffix_sum[j.min(off.len())]) / denom).clamp(lo, hi.min(f64::MAX));
        best = best.min(h(t));
        best = best.min(h(lo));
    }
    best.max(0.0).sqrt()
}

/// Outer function of the compositional objective.
#[derive(Clone)]
pub enum OuterFunction {
    Smooth(Arc<dyn SmoothOuter>),
    MaxForm(MaxFormOuter),
}

impl fmt::Debug for OuterFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OuterFunction::Smooth(s) => f.debug_tuple("Smooth").field(&s.name()).finish(),
            OuterFunction::MaxForm(m) => f.debug_tuple("MaxForm").field(m).finish(),
        }
    }
}

impl OuterFunction {
    pub fn smooth(s: impl SmoothOuter + 'static) -> Self {
        OuterFunction::Smooth(Arc::new(s))
    }

    /// Strong-convexity modulus of `ψ`; smooth outer functions count as 1.
    pub fn mu_psi(&self) -> f64 {
        match self {
            OuterFunction::Smooth(_) => 1.0,
            OuterFunction::MaxForm(m) => m.psi.strong_convexity(),
        }
    }

    pub fn needs_smoothing(&self) -> bool {
        self.mu_psi() == 0.0
    }

    /// `∇φγ(u)`. Smooth outer functions ignore `gamma`.
    pub fn grad(&self, u: &[f64], gamma: f64) -> Result<Vec<f64>> {
        match self {
            OuterFunction::Smooth(s) => {
                ensure_finite(u, "u")?;
                Ok(s.grad(u))
            }
            OuterFunction::MaxForm(m) => m.grad_phi_gamma(u, gamma),
        }
    }

    /// `φγ(u)`. Smooth outer functions ignore `gamma`.
    pub fn value(&self, u: &[f64], gamma: f64) -> Result<f64> {
        match self {
            OuterFunction::Smooth(s) => Ok(s.value(u)),
            OuterFunction::MaxForm(m) => m.phi_gamma_value(u, gamma),
        }
    }

    /// Unsmoothed `φ0(u)`.
    pub fn value_unsmoothed(&self, u: &[f64]) -> Result<f64> {
        match self {
            OuterFunction::Smooth(s) => Ok(s.value(u)),
            OuterFunction::MaxForm(m) => m.phi0_value(u),
        }
    }

    pub fn as_max_form(&self) -> Option<&MaxFormOuter> {
        match self {
            OuterFunction::MaxForm(m) => Some(m),
            OuterFunction::Smooth(_) => None,
        }
    }
}
