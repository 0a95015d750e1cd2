//! Risk-averse mean-variance portfolio selection.
//!
//! The reward `E[h] − ρ Var[h]` with `h_i(x) = ⟨r_i, x⟩` is maximised; the solver
//! minimises, so the outer function is `φ(u) = −u₁ − ρu₁² + ρu₂` applied to
//! `F(x, i) = (h_i(x), h_i(x)²)`. The reported reward is the negated objective.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SparseVec};
use crate::outer::{OuterFunction, SmoothOuter};
use crate::problem::CompositionProblem;
use crate::problems::dataset::Provenance;
use crate::regularizer::Regularizer;

pub const DEFAULT_RHO: f64 = 0.2;
pub const DEFAULT_LAMBDA: f64 = 0.01;
const SENTINELS: [f64; 2] = [-99.99, -999.0];

#[derive(Debug, Clone)]
pub struct PortfolioProblem {
    /// `N × p` returns, row `i` is period `i`.
    pub returns: Matrix,
    pub rho: f64,
    pub lambda: f64,
}

impl PortfolioProblem {
    pub fn new(returns: Matrix, rho: f64, lambda: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rho = {rho} must be positive"
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda = {lambda} must be nonnegative"
            )));
        }
        if returns.rows == 0 || returns.cols == 0 {
            return Err(Error::Data("empty return matrix".into()));
        }
        Ok(Self {
            returns,
            rho,
            lambda,
        })
    }

    pub fn outer(&self) -> OuterFunction {
        portfolio_outer(self.rho)
    }

    pub fn regularizer(&self) -> Regularizer {
        Regularizer::L1 {
            lambda: self.lambda,
        }
    }
}

impl CompositionProblem for PortfolioProblem {
    fn dim(&self) -> usize {
        self.returns.cols
    }

    fn range_dim(&self) -> usize {
        2
    }

    fn num_samples(&self) -> usize {
        self.returns.rows
    }

    fn sample_value(&self, x: &[f64], i: usize) -> Vec<f64> {
        let z = crate::linalg::dot(self.returns.row(i), x);
        vec![z, z * z]
    }

    fn sample_jacobian(&self, x: &[f64], i: usize) -> Vec<SparseVec> {
        let r = self.returns.row(i);
        let z = crate::linalg::dot(r, x);
        let first = SparseVec::from_dense(r);
        let second = first.scaled(2.0 * z);
        vec![first, second]
    }
}

/// `φ(u) = −u₁ − ρu₁² + ρu₂`.
#[derive(Debug, Clone, Copy)]
pub struct PortfolioOuter {
    pub rho: f64,
}

impl SmoothOuter for PortfolioOuter {
    fn value(&self, u: &[f64]) -> f64 {
        -u[0] - self.rho * u[0] * u[0] + self.rho * u[1]
    }

    fn grad(&self, u: &[f64]) -> Vec<f64> {
        vec![-1.0 - 2.0 * self.rho * u[0], self.rho]
    }

    fn smoothness(&self) -> f64 {
        2.0 * self.rho
    }

    fn name(&self) -> &'static str {
        "portfolio"
    }
}

pub fn portfolio_outer(rho: f64) -> OuterFunction {
    OuterFunction::smooth(PortfolioOuter { rho })
}

/// Gaussian returns: asset means drawn from `N(mean, mean_spread²)`, then
/// `r_ij = μ_j + vol·N(0, 1)`.
pub fn synthetic_returns(n: usize, p: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = Normal::new(0.1, 0.1).expect("valid normal");
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mu: Vec<f64> = (0..p).map(|_| means.sample(&mut rng)).collect();
    let mut m = Matrix::zeros(n, p);
    for i in 0..n {
        for (j, mj) in mu.iter().enumerate() {
            m.data[i * p + j] = mj + noise.sample(&mut rng);
        }
    }
    m
}

#[derive(Debug, Clone, Default)]
pub struct PortfolioCsvOptions {
    /// Drop rows containing a missing-value sentinel instead of failing.
    pub drop_missing: bool,
    /// First column holds a period label (e.g. a date) rather than a return.
    pub index_column: bool,
    pub expected_sha256: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PortfolioData {
    pub assets: Vec<String>,
    pub returns: Matrix,
    pub dropped_rows: usize,
    pub provenance: Provenance,
}

fn is_sentinel(v: f64) -> bool {
    SENTINELS.iter().any(|s| (v - s).abs() < 1e-9)
}

/// Reads a header row of asset names followed by one row of returns per period.
pub fn load_portfolio_csv(path: &Path, opts: &PortfolioCsvOptions) -> Result<PortfolioData> {
    let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let sha = hex::encode(Sha256::digest(&bytes));
    if let Some(expected) = &opts.expected_sha256 {
        if !expected.eq_ignore_ascii_case(&sha) {
            return Err(Error::Data(format!(
                "checksum mismatch for {}: expected {expected}, got {sha}",
                path.display()
            )));
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let skip = usize::from(opts.index_column);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.len() <= skip {
        return Err(Error::Data("CSV header names no assets".into()));
    }
    let assets: Vec<String> = headers.iter().skip(skip).map(str::to_string).collect();
    let p = assets.len();

    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |pos| pos.line() as usize);
        let mut row = Vec::with_capacity(p);
        for field in rec.iter().skip(skip) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            row.push(v);
        }
        rows.push((line, row));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    for j in 0..p {
        if rows.iter().all(|(_, r)| is_sentinel(r[j])) {
            return Err(Error::Data(format!(
                "column `{}` is entirely missing",
                assets[j]
            )));
        }
    }
    let mut data = Vec::with_capacity(rows.len() * p);
    let mut kept = 0;
    let mut dropped = 0;
    for (line, row) in rows {
        if row.iter().any(|v| is_sentinel(*v)) {
            if opts.drop_missing {
                dropped += 1;
                continue;
            }
            return Err(Error::Parse {
                line,
                message: "missing-value sentinel".into(),
            });
        }
        data.extend_from_slice(&row);
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::Data(
            "no rows left after dropping missing values".into(),
        ));
    }
    Ok(PortfolioData {
        assets,
        returns: Matrix {
            rows: kept,
            cols: p,
            data,
        },
        dropped_rows: dropped,
        provenance: Provenance {
            path: Some(path.display().to_string()),
            sha256: Some(sha),
            scaling: None,
        },
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            line,
            message: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        _ => Error::Parse {
            line,
            message: e.to_string(),
        },
    }
}

pub fn write_portfolio_csv(path: &Path, assets: &[String], returns: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record(assets)
        .map_err(|e| Error::Data(e.to_string()))?;
    for i in 0..returns.rows {
        w.write_record(returns.row(i).iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
