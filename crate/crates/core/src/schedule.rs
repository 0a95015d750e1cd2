//! Parameter schedules: the four theorem recipes and a manually tuned mode.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::estimators::{round_batch, BatchPlan, StepBatches};
use crate::problem::ProblemConstants;

/// Derived constants `P`, `Q`, `L_Φ0` and the `γ ↦ L_Φγ` map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub p: f64,
    pub q: f64,
    pub l_phi0: f64,
    /// `L_F · M_φ`
    pub lipschitz_term: f64,
    /// `M_F² · L_φ`
    pub curvature_term: f64,
    pub mu_psi: f64,
}

impl Constants {
    /// `M_φ` and `L_φ` come from `pc.outer_lipschitz` / `pc.outer_smoothness`
    /// (for max-form outer functions `M_ψ‖K‖` and `‖K‖²`).
    pub fn new(pc: &ProblemConstants, mu_psi: f64, plan: &BatchPlan) -> Result<Self> {
        if !pc.is_valid() {
            return config("problem constants must be finite and nonnegative");
        }
        if !(plan.c0 > 0.0) {
            return config("c0 must be positive");
        }
        let (kappa, kappa_hat, c0) = (plan.kappa(), plan.kappa_hat(), plan.c0);
        let m_phi = pc.outer_lipschitz;
        let l_phi = pc.outer_smoothness;
        let mf4 = pc.m_f.powi(4);
        let p = 26f64.sqrt() / (3.0 * c0.sqrt())
            * (kappa * mf4 * l_phi * l_phi + c0 * kappa_hat * pc.l_f * pc.l_f * m_phi * m_phi)
                .sqrt();
        let q = 26.0 / (9.0 * c0)
            * (kappa * mf4 * l_phi * l_phi * pc.sigma_f * pc.sigma_f
                + c0 * kappa_hat * m_phi * m_phi * pc.sigma_j * pc.sigma_j);
        let lipschitz_term = pc.l_f * m_phi;
        let curvature_term = pc.m_f * pc.m_f * l_phi;
        Ok(Self {
            p,
            q,
            l_phi0: lipschitz_term + curvature_term,
            lipschitz_term,
            curvature_term,
            mu_psi,
        })
    }

    /// `L_Φγ = L_F M_φ + M_F² L_φ / (γ + μ_ψ)`.
    pub fn l_phi_gamma(&self, gamma: f64) -> Result<f64> {
        let denom = gamma + self.mu_psi;
        if !(denom > 0.0) {
            return config("L_Phi_gamma needs gamma > 0 when psi is not strongly convex");
        }
        Ok(self.lipschitz_term + self.curvature_term / denom)
    }
}

/// How `γ_t` evolves under the manual schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ManualGamma {
    Zero,
    Constant(f64),
    /// `γ_t = 1 / (2 (t+1)^{1/3})`
    Diminishing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManualSchedule {
    pub eta: f64,
    pub theta: f64,
    /// Constant `β`; `None` uses `1 − (t+2)^{−2/3}`.
    pub beta: Option<f64>,
    pub gamma: ManualGamma,
}

/// Step-size grid used for tuning.
pub const ETA_GRID: [f64; 7] = [1.0, 0.5, 0.1, 0.05, 0.01, 0.001, 0.0001];
/// Averaging-weight grid used for tuning.
pub const THETA_GRID: [f64; 3] = [0.1, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScheduleVariant {
    /// Constant steps, `γ = 0`.
    Thm1,
    /// Diminishing steps, `γ = 0`.
    Thm2,
    /// Constant steps with constant smoothing `γ ∈ (0, 1]`.
    Thm3 {
        gamma: f64,
    },
    /// Diminishing steps with `γ_t = (t+2)^{−1/3}`.
    Thm4,
    Manual(ManualSchedule),
}

impl ScheduleVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleVariant::Thm1 => "thm1",
            ScheduleVariant::Thm2 => "thm2",
            ScheduleVariant::Thm3 { .. } => "thm3",
            ScheduleVariant::Thm4 => "thm4",
            ScheduleVariant::Manual(_) => "manual",
        }
    }

    pub fn is_constant_step(&self) -> bool {
        matches!(
            self,
            ScheduleVariant::Thm1 | ScheduleVariant::Thm3 { .. } | ScheduleVariant::Manual(_)
        )
    }
}

/// Precomputed parameter trajectory for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub variant: ScheduleVariant,
    pub horizon: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    pub b1: Vec<usize>,
    pub b2: Vec<usize>,
    pub b1_hat: Vec<usize>,
    pub b2_hat: Vec<usize>,
    /// Output-selection weights `θ_t / L_Φγt` (`θ_t` when no constants).
    pub omega: Vec<f64>,
    /// Plan with the initial batch sizes and the `t = 0` step sizes.
    pub plan: BatchPlan,
}

impl ScheduleState {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn batches(&self, t: usize) -> StepBatches {
        StepBatches {
            b1: self.b1[t],
            b2: self.b2[t],
            b1_hat: self.b1_hat[t],
            b2_hat: self.b2_hat[t],
        }
    }
}

/// Inputs for [`schedule`].
#[derive(Debug, Clone)]
pub struct ScheduleInput<'a> {
    pub variant: ScheduleVariant,
    /// Horizon `T`; iterations run for `t = 0..=T`.
    pub horizon: usize,
    /// Mini-batch `b`.
    pub b: usize,
    /// Initial Jacobian batch `b̂0`; defaults depend on the variant.
    pub b0_hat: Option<usize>,
    pub constants: Option<&'a Constants>,
    /// Supplies `c0`, `c1`, `c2`, correlation flags and replacement mode.
    pub base: &'a BatchPlan,
    /// Number of samples `N`.
    pub n: usize,
}

/// Builds the full `(γ, β, β̂, θ, η, batch)` trajectory.
pub fn schedule(input: &ScheduleInput<'_>) -> Result<ScheduleState> {
    let ScheduleInput {
        variant,
        horizon,
        b,
        b0_hat,
        constants,
        base,
        n,
    } = *input;
    if horizon < 1 {
        return config("horizon T must be at least 1");
    }
    if b < 1 {
        return config("mini-batch b must be at least 1");
    }
    if n < 1 {
        return config("problem has no samples");
    }
    let steps = horizon + 1;
    let tp1 = steps as f64;
    let bf = b as f64;
    let c0 = base.c0;
    let default_b0_hat = round_batch(base.c1 * base.c1 * (bf * tp1).cbrt(), n);

    let need = |what: &str| -> Result<&Constants> {
        constants.ok_or_else(|| {
            crate::Error::InvalidConfig(format!("{what} schedule needs problem constants"))
        })
    };

    let mut st = ScheduleState {
        variant,
        horizon,
        gamma: Vec::with_capacity(steps),
        beta: Vec::with_capacity(steps),
        beta_hat: Vec::with_capacity(steps),
        theta: Vec::with_capacity(steps),
        eta: Vec::with_capacity(steps),
        b1: Vec::with_capacity(steps),
        b2: Vec::with_capacity(steps),
        b1_hat: Vec::with_capacity(steps),
        b2_hat: Vec::with_capacity(steps),
        omega: Vec::with_capacity(steps),
        plan: base.clone(),
    };

    match variant {
        ScheduleVariant::Thm1 | ScheduleVariant::Thm3 { .. } => {
            let k = need(variant.name())?;
            let gamma = match variant {
                ScheduleVariant::Thm3 { gamma } => {
                    if !(gamma > 0.0 && gamma <= 1.0) {
                        return config(format!("smoothing gamma = {gamma} must lie in (0, 1]"));
                    }
                    gamma
                }
                _ => {
                    if !(k.mu_psi > 0.0) {
                        return config(
                            "thm1 schedule uses gamma = 0 and needs a strongly convex psi",
                        );
                    }
                    0.0
                }
            };
            let l = k.l_phi_gamma(gamma)?;
            let b0h = b0_hat.unwrap_or(default_b0_hat);
            if b0h < 1 || b0h > n && !base.with_replacement {
                return config(format!("initial batch b0_hat = {b0h} must lie in [1, {n}]"));
            }
            let b0hf = b0h as f64;
            let g2 = if gamma > 0.0 { gamma * gamma } else { 1.0 };
            let beta = 1.0 - (bf / (b0hf * tp1)).sqrt();
            if !(beta > 0.0 && beta <= 1.0) {
                return config(format!(
                    "beta = {beta} outside (0, 1]: need b < b0_hat (T + 1)"
                ));
            }
            if !(k.p > 0.0) {
                return config("constant P must be positive");
            }
            let theta = l * bf.powf(0.75) / (k.p * (b0hf * tp1).powf(0.25));
            if !(theta > 0.0 && theta <= 1.0) {
                return config(format!(
                    "theta = {theta} outside (0, 1]: need b0_hat (T + 1) / b^3 > L^4 / P^4 ({} vs {})",
                    b0hf * tp1 / bf.powi(3),
                    (l / k.p).powi(4)
                ));
            }
            let eta = 2.0 / (l * (3.0 + theta));
            let b1 = round_batch(c0 * bf / g2, n);
            st.plan.b0 = round_batch(c0 * b0hf / g2, n);
            st.plan.b0_hat = b0h;
            for _ in 0..steps {
                st.gamma.push(gamma);
                st.beta.push(beta);
                st.beta_hat.push(beta);
                st.theta.push(theta);
                st.eta.push(eta);
                st.b1.push(b1);
                st.b2.push(b1);
                st.b1_hat.push(b.min(n));
                st.b2_hat.push(b.min(n));
                st.omega.push(theta / l);
            }
        }
        ScheduleVariant::Thm2 | ScheduleVariant::Thm4 => {
            let k = need(variant.name())?;
            let smoothing = matches!(variant, ScheduleVariant::Thm4);
            if !smoothing && !(k.mu_psi > 0.0) {
                return config("thm2 schedule uses gamma = 0 and needs a strongly convex psi");
            }
            if !(k.p > 0.0) {
                return config("constant P must be positive");
            }
            let b0h = b0_hat.unwrap_or(b.min(n));
            if b0h < 1 || b0h > n && !base.with_replacement {
                return config(format!("initial batch b0_hat = {b0h} must lie in [1, {n}]"));
            }
            let gamma0 = if smoothing {
                2f64.powf(-1.0 / 3.0)
            } else {
                0.0
            };
            let g2 = if smoothing { gamma0 * gamma0 } else { 1.0 };
            st.plan.b0 = round_batch(c0 * b0h as f64 / g2, n);
            st.plan.b0_hat = b0h;
            for t in 0..steps {
                let tt = (t + 2) as f64;
                let gamma = if smoothing { tt.powf(-1.0 / 3.0) } else { 0.0 };
                let l = k.l_phi_gamma(gamma)?;
                let beta = 1.0 - tt.powf(-2.0 / 3.0);
                let theta = l * bf.sqrt() / (k.p * tt.cbrt());
                if !(theta > 0.0 && theta <= 1.0) {
                    return config(format!(
                        "theta_{t} = {theta} outside (0, 1]: mini-batch b = {b} too large for these constants"
                    ));
                }
                let eta = 2.0 / (l * (3.0 + theta));
                let b1 = if smoothing {
                    round_batch(c0 * bf * tt.powf(2.0 / 3.0), n)
                } else {
                    round_batch(c0 * bf, n)
                };
                st.gamma.push(gamma);
                st.beta.push(beta);
                st.beta_hat.push(beta);
                st.theta.push(theta);
                st.eta.push(eta);
                st.b1.push(b1);
                st.b2.push(b1);
                st.b1_hat.push(b.min(n));
                st.b2_hat.push(b.min(n));
                st.omega.push(theta / l);
            }
        }
        ScheduleVariant::Manual(m) => {
            if !(m.eta > 0.0) || !m.eta.is_finite() {
                return config(format!("manual eta = {} must be positive", m.eta));
            }
            if !(m.theta > 0.0 && m.theta <= 1.0) {
                return config(format!("manual theta = {} outside (0, 1]", m.theta));
            }
            if let Some(beta) = m.beta {
                if !(beta > 0.0 && beta <= 1.0) {
                    return config(format!("manual beta = {beta} outside (0, 1]"));
                }
            }
            if let ManualGamma::Constant(g) = m.gamma {
                if !(g >= 0.0) || !g.is_finite() {
                    return config(format!("manual gamma = {g} must be nonnegative"));
                }
            }
            let bb = b.min(n);
            st.plan.b0 = b0_hat.unwrap_or(bb);
            st.plan.b0_hat = b0_hat.unwrap_or(bb);
            for t in 0..steps {
                let gamma = match m.gamma {
                    ManualGamma::Zero => 0.0,
                    ManualGamma::Constant(g) => g,
                    ManualGamma::Diminishing => 0.5 / ((t + 1) as f64).cbrt(),
                };
                let beta = m
                    .beta
                    .unwrap_or_else(|| 1.0 - ((t + 2) as f64).powf(-2.0 / 3.0));
                let omega = match constants {
                    Some(k) => m.theta / k.l_phi_gamma(gamma)?,
                    None => m.theta,
                };
                st.gamma.push(gamma);
                st.beta.push(beta);
                st.beta_hat.push(beta);
                st.theta.push(m.theta);
                st.eta.push(m.eta);
                st.b1.push(bb);
                st.b2.push(bb);
                st.b1_hat.push(bb);
                st.b2_hat.push(bb);
                st.omega.push(omega);
            }
        }
    }
    st.plan.b1 = st.b1[0];
    st.plan.b2 = st.b2[0];
    st.plan.b1_hat = st.b1_hat[0];
    st.plan.b2_hat = st.b2_hat[0];
    st.plan.validate(n)?;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_constants(kappa_corr: bool) -> (ProblemConstants, BatchPlan) {
        let pc = ProblemConstants {
            m_f: 1.0,
            l_f: 1.0,
            sigma_f: 0.0,
            sigma_j: 0.0,
            outer_lipschitz: 1.0,
            outer_smoothness: 1.0,
            estimation_seed: None,
            estimation_pairs: None,
        };
        let mut plan = BatchPlan::uniform(1);
        plan.corr_f = kappa_corr;
        plan.corr_j = kappa_corr;
        (pc, plan)
    }

    #[test]
    fn p_constant_unit_inputs() {
        let (pc, plan) = unit_constants(true);
        let k = Constants::new(&pc, 0.0, &plan).unwrap();
        // sqrt(26)/3 * sqrt(2 + 2) by hand
        let by_hand = 2.0 * 26f64.sqrt() / 3.0;
        assert!((k.p - by_hand).abs() < 1e-12);
        assert!((k.p - 3.399).abs() < 1e-3);
        assert_eq!(k.q, 0.0);
        assert_eq!(k.l_phi_gamma(1.0).unwrap(), 2.0);
        assert_eq!(k.l_phi0, 2.0);
        assert!(k.l_phi_gamma(0.0).is_err());
    }

    #[test]
    fn l_phi_gamma_nonincreasing() {
        let (pc, plan) = unit_constants(false);
        let k = Constants::new(&pc, 0.0, &plan).unwrap();
        let mut prev = f64::INFINITY;
        for g in [0.01, 0.1, 0.3, 0.5, 1.0, 2.0] {
            let l = k.l_phi_gamma(g).unwrap();
            assert!(l <= prev);
            prev = l;
        }
    }

    fn input<'a>(
        variant: ScheduleVariant,
        horizon: usize,
        b: usize,
        b0_hat: Option<usize>,
        k: &'a Constants,
        plan: &'a BatchPlan,
    ) -> ScheduleInput<'a> {
        ScheduleInput {
            variant,
            horizon,
            b,
            b0_hat,
            constants: Some(k),
            base: plan,
            n: 1_000_000,
        }
    }

    #[test]
    fn thm1_beta_example() {
        let (pc, plan) = unit_constants(true);
        let k = Constants::new(&pc, 1.0, &plan).unwrap();
        let s = schedule(&input(ScheduleVariant::Thm1, 63, 1, Some(1), &k, &plan)).unwrap();
        assert!((s.beta[0] - 0.875).abs() < 1e-15);
        assert!(s.gamma.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn thm2_and_thm4_first_values() {
        let (pc, plan) = unit_constants(true);
        let k1 = Constants::new(&pc, 1.0, &plan).unwrap();
        let s = schedule(&input(ScheduleVariant::Thm2, 10, 1, None, &k1, &plan)).unwrap();
        assert!((s.beta[0] - 0.370_04).abs() < 1e-5);
        let k0 = Constants::new(&pc, 0.0, &plan).unwrap();
        let mut plan4 = plan.clone();
        plan4.c0 = 0.2;
        let k4 = Constants::new(&pc, 0.0, &plan4).unwrap();
        let s = schedule(&input(ScheduleVariant::Thm4, 10, 3, None, &k4, &plan4)).unwrap();
        assert!((s.gamma[0] - 0.793_70).abs() < 1e-5);
        assert_eq!(s.b1[0], (0.2 * 3.0 * 2f64.powf(2.0 / 3.0)).ceil() as usize);
        let _ = k0;
    }

    #[test]
    fn thm1_needs_strong_convexity() {
        let (pc, plan) = unit_constants(true);
        let k = Constants::new(&pc, 0.0, &plan).unwrap();
        assert!(schedule(&input(ScheduleVariant::Thm1, 63, 1, Some(1), &k, &plan)).is_err());
    }

    #[test]
    fn thm1_infeasible_theta_is_named() {
        let (pc, plan) = unit_constants(true);
        let k = Constants::new(&pc, 1.0, &plan).unwrap();
        let err = schedule(&input(ScheduleVariant::Thm1, 15, 8, Some(1), &k, &plan)).unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");
    }

    #[test]
    fn manual_diminishing_gamma() {
        let plan = BatchPlan::uniform(4);
        let m = ManualSchedule {
            eta: 0.1,
            theta: 0.5,
            beta: None,
            gamma: ManualGamma::Diminishing,
        };
        let s = schedule(&ScheduleInput {
            variant: ScheduleVariant::Manual(m),
            horizon: 7,
            b: 4,
            b0_hat: None,
            constants: None,
            base: &plan,
            n: 40,
        })
        .unwrap();
        assert_eq!(s.gamma[0], 0.5);
        assert!((s.gamma[7] - 0.25).abs() < 1e-15);
        assert_eq!(s.omega, vec![0.5; 8]);
    }
}
