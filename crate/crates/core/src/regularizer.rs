//! The primal regularizer `R` and its oracles.

use crate::error::{Error, Result};
use crate::prox::{prox_l1, prox_sql2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    Zero,
    /// `lambda * ‖x‖₁`
    L1 {
        lambda: f64,
    },
    /// `(lambda/2) * ‖x‖²`
    SquaredL2 {
        lambda: f64,
    },
}

impl Regularizer {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { lambda } => lambda * crate::linalg::norm1(x),
            Regularizer::SquaredL2 { lambda } => 0.5 * lambda * crate::linalg::norm_sq(x),
        }
    }

    /// `prox_{eta R}(x)`
    pub fn prox(&self, x: &[f64], eta: f64) -> Vec<f64> {
        match *self {
            Regularizer::Zero => x.to_vec(),
            Regularizer::L1 { lambda } => prox_l1(x, eta * lambda),
            Regularizer::SquaredL2 { lambda } => prox_sql2(x, eta, lambda),
        }
    }

    /// Exact Euclidean distance from the origin to `g + ∂R(x)`.
    pub fn subdiff_dist(&self, x: &[f64], g: &[f64]) -> Result<f64> {
        if x.len() != g.len() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: x has {}, g has {}",
                x.len(),
                g.len()
            )));
        }
        let d = match *self {
            Regularizer::Zero => crate::linalg::norm(g),
            Regularizer::L1 { lambda } => x
                .iter()
                .zip(g)
                .map(|(&xi, &gi)| {
                    let c = if xi > 0.0 {
                        gi + lambda
                    } else if xi < 0.0 {
                        gi - lambda
                    } else {
                        (gi.abs() - lambda).max(0.0)
                    };
                    c * c
                })
                .sum::<f64>()
                .sqrt(),
            Regularizer::SquaredL2 { lambda } => x
                .iter()
                .zip(g)
                .map(|(&xi, &gi)| (gi + lambda * xi).powi(2))
                .sum::<f64>()
                .sqrt(),
        };
        Ok(d)
    }
}
