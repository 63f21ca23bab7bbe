//! Latent-component regression on plug-in covariance estimates: the
//! unregularized best linear predictor, ridge, lasso and low-rank tensor
//! variants, latent R², and split-based hyperparameter selection.

mod fit;
mod lasso;
mod partition;
mod plugin;
mod tensor;
mod tuning;

pub use fit::{Hyperparameters, LatentRegressionFit, Method};
pub use lasso::{fit_lasso, fit_lasso_path, kkt_residual, KKT_TOLERANCE};
pub use partition::{BlockPartition, RegressionBlocks};
pub use plugin::{fit_ridge, latent_beta_unregularized, latent_r2, to_correlation, Correlation};
pub use tensor::{fit_tensor, fit_tensor_from, TensorOptions, TensorRun};
pub use tuning::{
    component_correlation, cross_fit_select, cross_fit_select_precomputed, family_groups, family_half_split, fit_with, refit_selected,
    ComponentChoice, CrossFitOptions, GridScore, RegressionGrids, ResponseTuning, TuningResult,
};

use nalgebra::DVector;

/// Coefficients with each symmetric predictor pair `(r, c)`/`(c, r)`
/// summed into the first position of the pair; the second is zeroed.
pub fn sum_symmetric_pairs(part: &BlockPartition, beta: &DVector<f64>) -> DVector<f64> {
    let mut out = beta.clone();
    for (a, b) in part.symmetric_pairs() {
        out[a] += out[b];
        out[b] = 0.0;
    }
    out
}
