//! Multivariate variance-components estimation for family designs:
//! moment-matching covariance estimators with PSD constraints, latent
//! regression on estimated component covariances, simulation sweeps and
//! covariance smoothing for function-valued traits.

pub mod cli;
pub mod error;
pub mod estimate;
pub mod functional;
pub mod io;
pub mod linalg;
pub mod model;
pub mod regression;
pub mod simulation;

pub use error::{Result, VcompError};
