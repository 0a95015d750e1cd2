//! Hybrid variance-reduced estimators of `F(x_t)` and `F'(x_t)`.
//!
//! Each estimator mixes a recursive (SARAH-type) correction with a plain
//! mini-batch mean:
//!
//! ```text
//! F̃_t = β F̃_{t-1} + β·mean_{B¹}[F(x_t) − F(x_{t-1})] + (1 − β)·mean_{B²} F(x_t)
//! ```
//!
//! and likewise for the Jacobian with `β̂`, `B̂¹`, `B̂²`. When a correlation
//! flag is set the two batches coincide (`B¹ ≡ B²`), which turns the update
//! into the STORM estimator and saves the `b1` separate evaluations at `x_t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, ensure_finite, Error, Result};
use crate::linalg::axpy;
use crate::outer::OuterFunction;
use crate::problem::CompositionProblem;

/// Sample oracle calls made so far. Metrics never touch these.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounters {
    /// Number of `sample_value` calls.
    pub fn_evals: u64,
    /// Number of `sample_jacobian` calls.
    pub jac_evals: u64,
}

impl OracleCounters {
    pub fn epochs(&self, n: usize) -> f64 {
        self.fn_evals as f64 / n as f64
    }
}

impl std::ops::Add for OracleCounters {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            fn_evals: self.fn_evals + o.fn_evals,
            jac_evals: self.jac_evals + o.jac_evals,
        }
    }
}

/// Mini-batch sizes and batch-coupling flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub b0: usize,
    pub b0_hat: usize,
    pub b1: usize,
    pub b2: usize,
    pub b1_hat: usize,
    pub b2_hat: usize,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// `B¹_t ≡ B²_t`
    pub corr_f: bool,
    /// `B̂¹_t ≡ B̂²_t`
    pub corr_j: bool,
    pub with_replacement: bool,
}

impl BatchPlan {
    /// Same size `b` everywhere, correlated batches, unit tuning constants.
    pub fn uniform(b: usize) -> Self {
        Self {
            b0: b,
            b0_hat: b,
            b1: b,
            b2: b,
            b1_hat: b,
            b2_hat: b,
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            corr_f: true,
            corr_j: true,
            with_replacement: false,
        }
    }

    /// 1 when `B¹` and `B²` are drawn independently, 2 otherwise.
    pub fn kappa(&self) -> f64 {
        if self.corr_f {
            2.0
        } else {
            1.0
        }
    }

    pub fn kappa_hat(&self) -> f64 {
        if self.corr_j {
            2.0
        } else {
            1.0
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, b) in [
            ("b0", self.b0),
            ("b0_hat", self.b0_hat),
            ("b1", self.b1),
            ("b2", self.b2),
            ("b1_hat", self.b1_hat),
            ("b2_hat", self.b2_hat),
        ] {
            if b == 0 {
                return config(format!("batch size {name} must be positive"));
            }
            if !self.with_replacement && b > n {
                return config(format!(
                    "batch size {name} = {b} exceeds the {n} available samples"
                ));
            }
        }
        if self.corr_f && self.b1 != self.b2 {
            return config("correlated function batches need b1 == b2");
        }
        if self.corr_j && self.b1_hat != self.b2_hat {
            return config("correlated Jacobian batches need b1_hat == b2_hat");
        }
        for (name, c) in [("c0", self.c0), ("c1", self.c1), ("c2", self.c2)] {
            if !(c > 0.0) || !c.is_finite() {
                return config(format!("{name} must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Round a real-valued batch size up and clamp it to `[1, n]`.
pub fn round_batch(b: f64, n: usize) -> usize {
    if !b.is_finite() || b >= n as f64 {
        return n;
    }
    (b.ceil() as usize).clamp(1, n)
}

/// Seeded uniform index sampler. Batches come back sorted so reductions run
/// in a fixed order.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    n: usize,
    with_replacement: bool,
}

impl BatchSampler {
    pub fn new(seed: u64, n: usize, with_replacement: bool) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
            with_replacement,
        }
    }

    pub fn draw(&mut self, size: usize) -> Result<Vec<usize>> {
        if size == 0 {
            return config("batch size must be positive");
        }
        let mut idx = if self.with_replacement {
            (0..size)
                .map(|_| self.rng.random_range(0..self.n))
                .collect::<Vec<_>>()
        } else {
            if size > self.n {
                return config(format!(
                    "batch of {size} exceeds the {} available samples",
                    self.n
                ));
            }
            if size == self.n {
                (0..self.n).collect()
            } else {
                rand::seq::index::sample(&mut self.rng, self.n, size).into_vec()
            }
        };
        idx.sort_unstable();
        Ok(idx)
    }
}

/// Per-iteration batch sizes handed to [`HybridEstimators::update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepBatches {
    pub b1: usize,
    pub b2: usize,
    pub b1_hat: usize,
    pub b2_hat: usize,
}

impl From<&BatchPlan> for StepBatches {
    fn from(p: &BatchPlan) -> Self {
        Self {
            b1: p.b1,
            b2: p.b2,
            b1_hat: p.b1_hat,
            b2_hat: p.b2_hat,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HybridEstimators {
    /// `F̃_t ∈ ℝ^q`
    pub f: Vec<f64>,
    /// `J̃_t`, row-major `q × p`
    pub j: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub t: usize,
    pub counters: OracleCounters,
    corr_f: bool,
    corr_j: bool,
    q: usize,
    p: usize,
    sampler: BatchSampler,
}

impl HybridEstimators {
    /// Builds `F̃_0`, `J̃_0` as plain batch means of sizes `b0`, `b0_hat`.
    pub fn init<P: CompositionProblem + ?Sized>(
        problem: &P,
        x0: &[f64],
        plan: &BatchPlan,
        seed: u64,
    ) -> Result<Self> {
        Self::init_with_sampler(
            problem,
            x0,
            plan,
            BatchSampler::new(seed, problem.num_samples(), plan.with_replacement),
        )
    }

    /// As [`init`](Self::init) but continuing an existing sampler stream.
    pub fn init_with_sampler<P: CompositionProblem + ?Sized>(
        problem: &P,
        x0: &[f64],
        plan: &BatchPlan,
        mut sampler: BatchSampler,
    ) -> Result<Self> {
        ensure_finite(x0, "x0")?;
        if x0.len() != problem.dim() {
            return Err(Error::InvalidInput(format!(
                "x0 has length {}, expected {}",
                x0.len(),
                problem.dim()
            )));
        }
        plan.validate(problem.num_samples())?;
        let (q, p) = (problem.range_dim(), problem.dim());
        let mut counters = OracleCounters::default();

        let b0 = sampler.draw(plan.b0)?;
        let mut f = vec![0.0; q];
        for &i in &b0 {
            axpy(1.0, &problem.sample_value(x0, i), &mut f);
        }
        scale_in_place(&mut f, 1.0 / b0.len() as f64);
        counters.fn_evals += b0.len() as u64;

        let b0_hat = sampler.draw(plan.b0_hat)?;
        let mut j = vec![0.0; q * p];
        for &i in &b0_hat {
            add_jacobian(problem, x0, i, 1.0, &mut j, p);
        }
        scale_in_place(&mut j, 1.0 / b0_hat.len() as f64);
        counters.jac_evals += b0_hat.len() as u64;

        Ok(Self {
            f,
            j,
            x_prev: x0.to_vec(),
            t: 0,
            counters,
            corr_f: plan.corr_f,
            corr_j: plan.corr_j,
            q,
            p,
            sampler,
        })
    }

    pub fn into_sampler(self) -> BatchSampler {
        self.sampler
    }

    /// Advances both estimators to `x_t` using weights `β_{t-1}`, `β̂_{t-1}`.
    pub fn update<P: CompositionProblem + ?Sized>(
        &mut self,
        problem: &P,
        x_t: &[f64],
        beta: f64,
        beta_hat: f64,
        sizes: StepBatches,
    ) -> Result<()> {
        ensure_finite(x_t, "x_t")?;
        for (name, w) in [("beta", beta), ("beta_hat", beta_hat)] {
            if !(0.0..=1.0).contains(&w) {
                return config(format!("{name} = {w} must lie in [0, 1]"));
            }
        }
        self.update_f(problem, x_t, beta, sizes.b1, sizes.b2)?;
        self.update_j(problem, x_t, beta_hat, sizes.b1_hat, sizes.b2_hat)?;
        self.x_prev.copy_from_slice(x_t);
        self.t += 1;
        Ok(())
    }

    fn update_f<P: CompositionProblem + ?Sized>(
        &mut self,
        problem: &P,
        x_t: &[f64],
        beta: f64,
        b1: usize,
        b2: usize,
    ) -> Result<()> {
        let q = self.q;
        let mut corr_sum = vec![0.0; q];
        let mut fresh_sum = vec![0.0; q];
        let (n1, n2);
        if self.corr_f {
            if b1 != b2 {
                return config("correlated function batches need b1 == b2");
            }
            let batch = self.sampler.draw(b1)?;
            for &i in &batch {
                let cur = problem.sample_value(x_t, i);
                self.counters.fn_evals += 1;
                if beta > 0.0 {
                    let prev = problem.sample_value(&self.x_prev, i);
                    self.counters.fn_evals += 1;
                    for k in 0..q {
                        corr_sum[k] += cur[k] - prev[k];
                    }
                }
                if beta < 1.0 {
                    axpy(1.0, &cur, &mut fresh_sum);
                }
            }
            n1 = batch.len();
            n2 = batch.len();
        } else {
            n1 = b1;
            n2 = b2;
            if beta > 0.0 {
                for &i in &self.sampler.draw(b1)? {
                    let cur = problem.sample_value(x_t, i);
                    let prev = problem.sample_value(&self.x_prev, i);
                    self.counters.fn_evals += 2;
                    for k in 0..q {
                        corr_sum[k] += cur[k] - prev[k];
                    }
                }
            }
            if beta < 1.0 {
                for &i in &self.sampler.draw(b2)? {
                    axpy(1.0, &problem.sample_value(x_t, i), &mut fresh_sum);
                    self.counters.fn_evals += 1;
                }
            }
        }
        combine(&mut self.f, beta, &mut corr_sum, n1, &mut fresh_sum, n2);
        Ok(())
    }

    fn update_j<P: CompositionProblem + ?Sized>(
        &mut self,
        problem: &P,
        x_t: &[f64],
        beta_hat: f64,
        b1: usize,
        b2: usize,
    ) -> Result<()> {
        let p = self.p;
        let len = self.q * p;
        let mut corr_sum = vec![0.0; len];
        let mut fresh_sum = vec![0.0; len];
        let (n1, n2);
        if self.corr_j {
            if b1 != b2 {
                return config("correlated Jacobian batches need b1_hat == b2_hat");
            }
            let batch = self.sampler.draw(b1)?;
            for &i in &batch {
                let cur = problem.sample_jacobian(x_t, i);
                self.counters.jac_evals += 1;
                if beta_hat > 0.0 {
                    let prev = problem.sample_jacobian(&self.x_prev, i);
                    self.counters.jac_evals += 1;
                    for (k, (rc, rp)) in cur.iter().zip(&prev).enumerate() {
                        rc.axpy_into(1.0, &mut corr_sum[k * p..(k + 1) * p]);
                        rp.axpy_into(-1.0, &mut corr_sum[k * p..(k + 1) * p]);
                    }
                }
                if beta_hat < 1.0 {
                    for (k, rc) in cur.iter().enumerate() {
                        rc.axpy_into(1.0, &mut fresh_sum[k * p..(k + 1) * p]);
                    }
                }
            }
            n1 = batch.len();
            n2 = batch.len();
        } else {
            n1 = b1;
            n2 = b2;
            if beta_hat > 0.0 {
                for &i in &self.sampler.draw(b1)? {
                    add_jacobian(problem, x_t, i, 1.0, &mut corr_sum, p);
                    add_jacobian(problem, &self.x_prev, i, -1.0, &mut corr_sum, p);
                    self.counters.jac_evals += 2;
                }
            }
            if beta_hat < 1.0 {
                for &i in &self.sampler.draw(b2)? {
                    add_jacobian(problem, x_t, i, 1.0, &mut fresh_sum, p);
                    self.counters.jac_evals += 1;
                }
            }
        }
        combine(&mut self.j, beta_hat, &mut corr_sum, n1, &mut fresh_sum, n2);
        Ok(())
    }

    /// `v = J̃ᵀ ∇φγ(F̃)`; one dual prox evaluation for max-form outer functions.
    pub fn gradient_estimate(&self, outer: &OuterFunction, gamma: f64) -> Result<Vec<f64>> {
        let w = outer.grad(&self.f, gamma)?;
        Ok(jt_mul(&self.j, self.q, self.p, &w))
    }
}

/// `Jᵀ w` for a row-major `q × p` matrix.
pub fn jt_mul(j: &[f64], q: usize, p: usize, w: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; p];
    for k in 0..q {
        if w[k] != 0.0 {
            axpy(w[k], &j[k * p..(k + 1) * p], &mut v);
        }
    }
    v
}

fn add_jacobian<P: CompositionProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    i: usize,
    alpha: f64,
    out: &mut [f64],
    p: usize,
) {
    for (k, row) in problem.sample_jacobian(x, i).iter().enumerate() {
        row.axpy_into(alpha, &mut out[k * p..(k + 1) * p]);
    }
}

fn scale_in_place(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// `est ← β est + β·corr/n1 + (1 − β)·fresh/n2`, dropping zero-weight terms.
fn combine(
    est: &mut [f64],
    beta: f64,
    corr_sum: &mut [f64],
    n1: usize,
    fresh_sum: &mut [f64],
    n2: usize,
) {
    scale_in_place(corr_sum, 1.0 / n1 as f64);
    scale_in_place(fresh_sum, 1.0 / n2 as f64);
    for ((e, c), f) in est.iter_mut().zip(corr_sum.iter()).zip(fresh_sum.iter()) {
        let mut next = 0.0;
        if beta > 0.0 {
            next = beta * *e + beta * c;
        }
        if beta < 1.0 {
            next += (1.0 - beta) * f;
        }
        *e = next;
    }
}
