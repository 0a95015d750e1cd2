//! The stochastic compositional problem contract and its smoothness constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{axpy, norm, SparseVec};
use crate::outer::OuterFunction;

/// Finite-sum oracle for `F(x, ξ_i)` and its Jacobian, `i ∈ 0..N`.
///
/// Both oracles must be deterministic functions of `(x, i)`.
pub trait CompositionProblem: Send + Sync {
    /// Primal dimension `p`.
    fn dim(&self) -> usize;
    /// Range dimension `q` of `F`.
    fn range_dim(&self) -> usize;
    /// Number of samples `N`.
    fn num_samples(&self) -> usize;
    /// `F(x, ξ_i) ∈ ℝ^q`.
    fn sample_value(&self, x: &[f64], i: usize) -> Vec<f64>;
    /// The `q` rows of `F'(x, ξ_i)`.
    fn sample_jacobian(&self, x: &[f64], i: usize) -> Vec<SparseVec>;
}

/// Mean of `F(x, ξ_i)` over `batch`, accumulated in the order given.
pub fn batch_value<P: CompositionProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    batch: &[usize],
) -> Vec<f64> {
    let mut acc = vec![0.0; problem.range_dim()];
    for &i in batch {
        axpy(1.0, &problem.sample_value(x, i), &mut acc);
    }
    let inv = 1.0 / batch.len() as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    acc
}

/// `(1/|batch|) Σ F'(x, ξ_i)ᵀ w` without forming the Jacobian.
pub fn batch_jacobian_tmul<P: CompositionProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    batch: &[usize],
    w: &[f64],
) -> Vec<f64> {
    let mut acc = vec![0.0; problem.dim()];
    for &i in batch {
        for (row, wk) in problem.sample_jacobian(x, i).iter().zip(w) {
            if *wk != 0.0 {
                row.axpy_into(*wk, &mut acc);
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    acc
}

/// Dense mean Jacobian over `batch`, row-major `q × p`.
pub fn batch_jacobian<P: CompositionProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    batch: &[usize],
) -> Vec<f64> {
    let (q, p) = (problem.range_dim(), problem.dim());
    let mut acc = vec![0.0; q * p];
    for &i in batch {
        for (k, row) in problem.sample_jacobian(x, i).iter().enumerate() {
            row.axpy_into(1.0, &mut acc[k * p..(k + 1) * p]);
        }
    }
    let inv = 1.0 / batch.len() as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    acc
}

pub fn full_batch(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Assumption constants of the stochastic oracle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProblemConstants {
    /// Mean-square bound on `‖F'(x, ξ)‖`.
    pub m_f: f64,
    /// Mean-square smoothness of `F'`.
    pub l_f: f64,
    pub sigma_f: f64,
    pub sigma_j: f64,
    /// Bound on `‖∇φ‖` (for max-form outer functions `M_ψ‖K‖`).
    pub outer_lipschitz: f64,
    /// Smoothness of `φ` (for max-form outer functions `‖K‖²`, to be divided
    /// by `γ + μ_ψ`).
    pub outer_smoothness: f64,
    /// Seed used when the constants were estimated.
    pub estimation_seed: Option<u64>,
    /// Number of sampled point pairs when estimated.
    pub estimation_pairs: Option<usize>,
}

/// Settings for [`estimate_constants`].
#[derive(Debug, Clone)]
pub struct EstimationSettings {
    pub pairs: usize,
    /// Samples per point used for the means and variances.
    pub batch: usize,
    /// Radius of the sampling region around the center point.
    pub radius: f64,
    /// Multiplicative safety margin applied to every estimate.
    pub margin: f64,
    pub seed: u64,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        Self {
            pairs: 1000,
            batch: 64,
            radius: 1.0,
            margin: 1.1,
            seed: 0,
        }
    }
}

/// Estimates `M_F`, `L_F`, `σ_F`, `σ_J` (and the outer Lipschitz bound for
/// smooth outer functions without a global one) by sampling point pairs
/// around `center`. Each estimate is the max over pairs of a batch mean,
/// inflated by `settings.margin`.
pub fn estimate_constants<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    center: &[f64],
    settings: &EstimationSettings,
) -> ProblemConstants {
    let n = problem.num_samples();
    let (p, q) = (problem.dim(), problem.range_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let batch_len = settings.batch.min(n).max(1);
    let (mut mf2, mut lf2, mut sf2, mut sj2, mut outer_lip) =
        (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);

    let random_point = |rng: &mut ChaCha8Rng, base: &[f64], r: f64| -> Vec<f64> {
        let mut dir: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let nd = norm(&dir).max(f64::MIN_POSITIVE);
        let scale = r * rng.random::<f64>().powf(1.0 / p as f64) / nd;
        dir.iter_mut()
            .zip(base)
            .for_each(|(d, b)| *d = b + *d * scale);
        dir
    };

    for _ in 0..settings.pairs {
        let x = random_point(&mut rng, center, settings.radius);
        let x2 = random_point(&mut rng, &x, 0.1 * settings.radius);
        let dx = norm(&crate::linalg::sub(&x, &x2));
        let batch: Vec<usize> = rand::seq::index::sample(&mut rng, n, batch_len).into_vec();

        let values: Vec<Vec<f64>> = batch.iter().map(|&i| problem.sample_value(&x, i)).collect();
        let jacs: Vec<Vec<f64>> = batch
            .iter()
            .map(|&i| {
                let mut d = vec![0.0; q * p];
                for (k, row) in problem.sample_jacobian(&x, i).iter().enumerate() {
                    row.axpy_into(1.0, &mut d[k * p..(k + 1) * p]);
                }
                d
            })
            .collect();
        let inv = 1.0 / batch_len as f64;
        let mut mean_v = vec![0.0; q];
        values.iter().for_each(|v| axpy(inv, v, &mut mean_v));
        let mut mean_j = vec![0.0; q * p];
        jacs.iter().for_each(|j| axpy(inv, j, &mut mean_j));

        mf2 = mf2.max(jacs.iter().map(|j| crate::linalg::norm_sq(j)).sum::<f64>() * inv);
        sf2 = sf2.max(
            values
                .iter()
                .map(|v| crate::linalg::norm_sq(&crate::linalg::sub(v, &mean_v)))
                .sum::<f64>()
                * inv,
        );
        sj2 = sj2.max(
            jacs.iter()
                .map(|j| crate::linalg::norm_sq(&crate::linalg::sub(j, &mean_j)))
                .sum::<f64>()
                * inv,
        );

        if dx > 0.0 {
            let diff2: f64 = batch
                .iter()
                .zip(&jacs)
                .map(|(&i, j1)| {
                    let mut d = j1.clone();
                    for (k, row) in problem.sample_jacobian(&x2, i).iter().enumerate() {
                        row.axpy_into(-1.0, &mut d[k * p..(k + 1) * p]);
                    }
                    crate::linalg::norm_sq(&d)
                })
                .sum::<f64>()
                * inv;
            lf2 = lf2.max(diff2 / (dx * dx));
        }

        if let OuterFunction::Smooth(s) = outer {
            if s.lipschitz().is_none() {
                outer_lip = outer_lip.max(norm(&s.grad(&mean_v)));
            }
        }
    }

    let (outer_lipschitz, outer_smoothness) = match outer {
        OuterFunction::Smooth(s) => (
            s.lipschitz().unwrap_or(outer_lip * settings.margin),
            s.smoothness(),
        ),
        OuterFunction::MaxForm(m) => (m.psi.domain_bound() * m.k_norm(), m.k_norm().powi(2)),
    };
    ProblemConstants {
        m_f: mf2.sqrt() * settings.margin,
        l_f: lf2.sqrt() * settings.margin,
        sigma_f: sf2.sqrt() * settings.margin,
        sigma_j: sj2.sqrt() * settings.margin,
        outer_lipschitz,
        outer_smoothness,
        estimation_seed: Some(settings.seed),
        estimation_pairs: Some(settings.pairs),
    }
}

impl ProblemConstants {
    /// Constants supplied directly; outer terms are filled from `outer`.
    pub fn given(m_f: f64, l_f: f64, sigma_f: f64, sigma_j: f64, outer: &OuterFunction) -> Self {
        let (outer_lipschitz, outer_smoothness) = match outer {
            OuterFunction::Smooth(s) => (s.lipschitz().unwrap_or(1.0), s.smoothness()),
            OuterFunction::MaxForm(m) => (m.psi.domain_bound() * m.k_norm(), m.k_norm().powi(2)),
        };
        Self {
            m_f,
            l_f,
            sigma_f,
            sigma_j,
            outer_lipschitz,
            outer_smoothness,
            estimation_seed: None,
            estimation_pairs: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.m_f,
            self.l_f,
            self.sigma_f,
            self.sigma_j,
            self.outer_lipschitz,
            self.outer_smoothness,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
    }
}
