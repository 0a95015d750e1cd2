//! Mega-batch evaluation of the objective and the gradient mapping.
//!
//! Nothing here goes through the estimators, so oracle counters are untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config, Result};
use crate::linalg::norm_sq;
use crate::outer::OuterFunction;
use crate::problem::{batch_jacobian_tmul, batch_value, full_batch, CompositionProblem};
use crate::regularizer::Regularizer;

/// Fixed evaluation batch shared by every metric of a run.
#[derive(Debug, Clone)]
pub struct MetricsEvaluator {
    batch: Vec<usize>,
}

impl MetricsEvaluator {
    /// `mega_batch = None` (or `N`) evaluates on the full data.
    pub fn new(n: usize, mega_batch: Option<usize>, seed: u64) -> Result<Self> {
        let batch = match mega_batch {
            None => full_batch(n),
            Some(m) if m == n => full_batch(n),
            Some(m) if m == 0 || m > n => {
                return config(format!("mega batch {m} must lie in [1, {n}]"))
            }
            Some(m) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(2);
                let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                idx
            }
        };
        Ok(Self { batch })
    }

    pub fn batch(&self) -> &[usize] {
        &self.batch
    }

    /// `Ψ̂0(x) = φ0(F̂(x)) + R(x)`.
    pub fn objective<P: CompositionProblem + ?Sized>(
        &self,
        problem: &P,
        outer: &OuterFunction,
        reg: &Regularizer,
        x: &[f64],
    ) -> Result<f64> {
        let u = batch_value(problem, x, &self.batch);
        Ok(outer.value_unsmoothed(&u)? + reg.value(x))
    }

    /// `∇̂Φγ(x) = F̂'(x)ᵀ ∇φγ(F̂(x))`.
    pub fn gradient<P: CompositionProblem + ?Sized>(
        &self,
        problem: &P,
        outer: &OuterFunction,
        x: &[f64],
        gamma: f64,
    ) -> Result<Vec<f64>> {
        let u = batch_value(problem, x, &self.batch);
        let w = outer.grad(&u, gamma)?;
        Ok(batch_jacobian_tmul(problem, x, &self.batch, &w))
    }

    /// `G_η(x)` and `‖G_η(x)‖²`.
    pub fn gradient_mapping<P: CompositionProblem + ?Sized>(
        &self,
        problem: &P,
        outer: &OuterFunction,
        reg: &Regularizer,
        x: &[f64],
        eta: f64,
        gamma: f64,
    ) -> Result<(f64, Vec<f64>)> {
        if !(eta > 0.0) {
            return config(format!("step eta = {eta} must be positive"));
        }
        let g = self.gradient(problem, outer, x, gamma)?;
        Ok(mapping_from_gradient(reg, x, &g, eta))
    }
}

/// `G_η(x)` from a gradient estimate `g`. With `R = 0` this is `g` itself.
pub fn mapping_from_gradient(reg: &Regularizer, x: &[f64], g: &[f64], eta: f64) -> (f64, Vec<f64>) {
    let map = if matches!(reg, Regularizer::Zero) {
        g.to_vec()
    } else {
        let step: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - eta * gi).collect();
        let z = reg.prox(&step, eta);
        x.iter().zip(&z).map(|(xi, zi)| (xi - zi) / eta).collect()
    };
    (norm_sq(&map), map)
}

/// One-shot gradient mapping with its own evaluation batch.
#[allow(clippy::too_many_arguments)]
pub fn gradient_mapping<P: CompositionProblem + ?Sized>(
    problem: &P,
    outer: &OuterFunction,
    reg: &Regularizer,
    x: &[f64],
    eta: f64,
    gamma: f64,
    mega_batch: Option<usize>,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    MetricsEvaluator::new(problem.num_samples(), mega_batch, seed)?
        .gradient_mapping(problem, outer, reg, x, eta, gamma)
}
