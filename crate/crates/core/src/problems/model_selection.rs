//! Stochastic minimax model selection over four classification losses.
//!
//! With `z = b⟨a, x⟩` the components are
//! `F₁ = 1 − tanh z`, `F₂ = log(1+e^{−z}) − log(1+e^{−z−1})`, `F₃ = σ(−z)²` and
//! `F₄ = log(1+e^{−z})`, all nonnegative, so `max_j u_j = ‖u‖_∞` is the
//! support function of the unit L1 ball.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix, SparseVec};
use crate::outer::{DualFunction, MaxFormOuter, OuterFunction};
use crate::problem::CompositionProblem;
use crate::problems::dataset::{Dataset, Provenance};
use crate::regularizer::Regularizer;

pub const DEFAULT_LAMBDA: f64 = 1e-4;

/// `log(1 + e^s)` without overflow.
pub fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// The four losses at `z`.
pub fn losses(z: f64) -> [f64; 4] {
    let f1 = if z >= 0.0 {
        let e = (-2.0 * z).exp();
        2.0 * e / (1.0 + e)
    } else {
        1.0 - z.tanh()
    };
    let s = sigmoid(-z);
    [f1, softplus(-z) - softplus(-z - 1.0), s * s, softplus(-z)]
}

/// `dF_j/dz` for the four losses.
pub fn loss_derivatives(z: f64) -> [f64; 4] {
    let e = (-2.0 * z.abs()).exp();
    let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
    let sm = sigmoid(-z);
    [
        -sech2,
        -sm + sigmoid(-z - 1.0),
        -2.0 * sm * sm * sigmoid(z),
        -sm,
    ]
}

#[derive(Debug, Clone)]
pub struct ModelSelectionProblem {
    pub data: Dataset,
    pub lambda: f64,
}

impl ModelSelectionProblem {
    pub fn new(data: Dataset, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda = {lambda} must be positive"
            )));
        }
        if data
            .features
            .iter()
            .any(|r| r.indices.iter().any(|&j| j >= data.p))
        {
            return Err(Error::Data("feature index out of range".into()));
        }
        Ok(Self { data, lambda })
    }

    pub fn outer(&self) -> OuterFunction {
        model_selection_outer()
    }

    pub fn regularizer(&self) -> Regularizer {
        Regularizer::SquaredL2 {
            lambda: self.lambda,
        }
    }

    fn margin(&self, x: &[f64], i: usize) -> f64 {
        self.data.labels[i] * self.data.features[i].dot_dense(x)
    }
}

impl CompositionProblem for ModelSelectionProblem {
    fn dim(&self) -> usize {
        self.data.p
    }

    fn range_dim(&self) -> usize {
        4
    }

    fn num_samples(&self) -> usize {
        self.data.n()
    }

    fn sample_value(&self, x: &[f64], i: usize) -> Vec<f64> {
        losses(self.margin(x, i)).to_vec()
    }

    fn sample_jacobian(&self, x: &[f64], i: usize) -> Vec<SparseVec> {
        let b = self.data.labels[i];
        let a = &self.data.features[i];
        loss_derivatives(self.margin(x, i))
            .iter()
            .map(|d| a.scaled(d * b))
            .collect()
    }
}

/// `K = I₄`, `ψ` the indicator of the unit L1 ball, `ẏ = 0`.
pub fn model_selection_outer() -> OuterFunction {
    OuterFunction::MaxForm(
        MaxFormOuter::new(
            Matrix::identity(4),
            DualFunction::L1BallIndicator { radius: 1.0 },
            vec![0.0; 4],
        )
        .expect("identity outer is valid"),
    )
}

/// Dense Gaussian features scaled to unit norm, labels `sign⟨a, w*⟩` from a
/// planted unit vector `w*`, each flipped with probability `flip`.
pub fn synthetic_minimax(n: usize, p: usize, flip: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, 1.0).expect("valid normal");
    let mut w: Vec<f64> = (0..p).map(|_| g.sample(&mut rng)).collect();
    let nw = norm(&w);
    w.iter_mut().for_each(|v| *v /= nw);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut a: Vec<f64> = (0..p).map(|_| g.sample(&mut rng)).collect();
        let na = norm(&a);
        a.iter_mut().for_each(|v| *v /= na);
        let mut label = if dot(&a, &w) >= 0.0 { 1.0 } else { -1.0 };
        if rand::Rng::random_bool(&mut rng, flip.clamp(0.0, 1.0)) {
            label = -label;
        }
        features.push(SparseVec::new((0..p).collect(), a));
        labels.push(label);
    }
    Dataset {
        features,
        labels,
        p,
        provenance: Provenance::default(),
    }
}
