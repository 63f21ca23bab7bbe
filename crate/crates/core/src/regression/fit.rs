use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ridge,
    Lasso,
    Tensor,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ridge => "ridge",
            Method::Lasso => "lasso",
            Method::Tensor => "tensor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Hyperparameters {
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    Tensor { rank: usize, lambda: f64 },
}

impl Hyperparameters {
    pub fn method(&self) -> Method {
        match self {
            Hyperparameters::Ridge { .. } => Method::Ridge,
            Hyperparameters::Lasso { .. } => Method::Lasso,
            Hyperparameters::Tensor { .. } => Method::Tensor,
        }
    }

    /// Larger means more regularized; used only to break ties within a
    /// method (lower tensor rank first, then larger penalty).
    pub(crate) fn strength(&self) -> (i64, f64) {
        match *self {
            Hyperparameters::Ridge { lambda } | Hyperparameters::Lasso { lambda } => (0, lambda),
            Hyperparameters::Tensor { rank, lambda } => (-(rank as i64), lambda),
        }
    }
}

/// A fitted latent regression for one response trait.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRegressionFit {
    /// Trait column of the response.
    pub response_index: usize,
    pub hyperparameters: Hyperparameters,
    /// Coefficients in predictor order.
    pub beta: DVector<f64>,
    /// `(β₁, β₂)` with `mat(β) = β₁ β₂ᵀ` for tensor fits.
    pub factors: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// Penalized objective at `beta`.
    pub objective: f64,
    pub r2_in_sample: f64,
    pub r2_out_of_sample: Option<f64>,
    pub converged: bool,
}

impl LatentRegressionFit {
    pub fn method(&self) -> Method {
        self.hyperparameters.method()
    }
}
