//! Problem instances built from a configuration.

use hscg_core::linalg::SparseVec;
use hscg_core::problems::dataset::{load_libsvm, LibsvmOptions};
use hscg_core::problems::portfolio::{load_portfolio_csv, synthetic_returns, PortfolioCsvOptions};
use hscg_core::problems::{synthetic_minimax, ModelSelectionProblem, PortfolioProblem};
use hscg_core::{CompositionProblem, OuterFunction, Regularizer};

use crate::config::{ExperimentConfig, ProblemKind};
use crate::error::CliError;

pub enum LoadedProblem {
    Portfolio(PortfolioProblem),
    Minimax(ModelSelectionProblem),
}

impl LoadedProblem {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let p = &cfg.problem;
        match p.kind {
            ProblemKind::Portfolio => {
                let returns = match (&p.synthetic, cfg.data_path()) {
                    (Some(s), _) => synthetic_returns(s.n, s.p, s.seed),
                    (None, Some(path)) => {
                        let opts = PortfolioCsvOptions {
                            drop_missing: p.drop_missing,
                            index_column: p.index_column,
                            expected_sha256: p.sha256.clone(),
                        };
                        load_portfolio_csv(&path, &opts)?.returns
                    }
                    (None, None) => {
                        return Err(CliError::Config("problem has no data source".into()))
                    }
                };
                Ok(Self::Portfolio(PortfolioProblem::new(
                    returns,
                    p.rho.unwrap_or(0.2),
                    p.lambda.unwrap_or(0.01),
                )?))
            }
            ProblemKind::Minimax => {
                let data = match (&p.synthetic, cfg.data_path()) {
                    (Some(s), _) => synthetic_minimax(s.n, s.p, s.flip.unwrap_or(0.1), s.seed),
                    (None, Some(path)) => {
                        let opts = LibsvmOptions {
                            dim: p.dim,
                            max_abs_scale: p.max_abs_scale,
                            expected_sha256: p.sha256.clone(),
                        };
                        load_libsvm(&path, &opts)?
                    }
                    (None, None) => {
                        return Err(CliError::Config("problem has no data source".into()))
                    }
                };
                Ok(Self::Minimax(ModelSelectionProblem::new(
                    data,
                    p.lambda.unwrap_or(1e-4),
                )?))
            }
        }
    }

    pub fn outer(&self) -> OuterFunction {
        match self {
            Self::Portfolio(p) => p.outer(),
            Self::Minimax(p) => p.outer(),
        }
    }

    pub fn regularizer(&self) -> Regularizer {
        match self {
            Self::Portfolio(p) => p.regularizer(),
            Self::Minimax(p) => p.regularizer(),
        }
    }

    pub fn is_portfolio(&self) -> bool {
        matches!(self, Self::Portfolio(_))
    }

    /// Default block count `n_b`.
    pub fn default_blocks(&self) -> usize {
        if self.is_portfolio() {
            8
        } else {
            32
        }
    }

    fn inner(&self) -> &dyn CompositionProblem {
        match self {
            Self::Portfolio(p) => p,
            Self::Minimax(p) => p,
        }
    }
}

impl CompositionProblem for LoadedProblem {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn range_dim(&self) -> usize {
        self.inner().range_dim()
    }

    fn num_samples(&self) -> usize {
        self.inner().num_samples()
    }

    fn sample_value(&self, x: &[f64], i: usize) -> Vec<f64> {
        self.inner().sample_value(x, i)
    }

    fn sample_jacobian(&self, x: &[f64], i: usize) -> Vec<SparseVec> {
        self.inner().sample_jacobian(x, i)
    }
}

/// Adds `delta` to every Jacobian entry of `inner`.
pub struct PerturbedJacobian<'a, P: ?Sized> {
    pub inner: &'a P,
    pub delta: f64,
}

impl<P: CompositionProblem + ?Sized> CompositionProblem for PerturbedJacobian<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn range_dim(&self) -> usize {
        self.inner.range_dim()
    }

    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    fn sample_value(&self, x: &[f64], i: usize) -> Vec<f64> {
        self.inner.sample_value(x, i)
    }

    fn sample_jacobian(&self, x: &[f64], i: usize) -> Vec<SparseVec> {
        let p = self.dim();
        self.inner
            .sample_jacobian(x, i)
            .into_iter()
            .map(|row| {
                let mut dense = vec![self.delta; p];
                for (j, v) in row.indices.iter().zip(&row.values) {
                    dense[*j] += v;
                }
                SparseVec::new((0..p).collect(), dense)
            })
            .collect()
    }
}
