//! Moment-based covariance estimation: mvHE (closed form, optionally
//! eigenvalue-truncated), mvREHE (PSD-constrained block coordinate descent)
//! and their single-trait counterparts.

mod covariance;
mod mvhe;
mod mvrehe;
mod state;
mod univariate;

pub use covariance::{heritability, CovarianceSet, CERTIFY_RTOL};
pub use mvhe::{mvhe_fit, mvhe_from_state};
pub use mvrehe::{mvrehe_fit, mvrehe_from_state, Initialization, SolveDiagnostics, SolveOptions, SvdReduction};
pub use state::{objective_value, SolverState, SVD_RANK_RTOL};
pub use univariate::univariate_fit;

pub use crate::linalg::psd_project;
