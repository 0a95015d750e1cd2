//! Concrete problem instances and dataset ingestion.

pub mod dataset;
pub mod model_selection;
pub mod portfolio;

pub use dataset::{load_libsvm, write_libsvm, Dataset, LibsvmOptions, Provenance};
pub use model_selection::{model_selection_outer, synthetic_minimax, ModelSelectionProblem};
pub use portfolio::{
    load_portfolio_csv, portfolio_outer, synthetic_returns, write_portfolio_csv,
    PortfolioCsvOptions, PortfolioData, PortfolioOuter, PortfolioProblem,
};
