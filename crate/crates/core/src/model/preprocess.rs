use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VcompError};
use crate::model::traits::{CovariateMatrix, TraitMatrix};

const RANK_RTOL: f64 = 1e-10;

/// Residuals of a pooled least-squares fit of every trait on `x`:
/// `Y - X (XᵀX)⁻¹ Xᵀ Y`, computed through a thin QR of `X`.
pub fn residualize(y: &TraitMatrix, x: &CovariateMatrix) -> Result<TraitMatrix> {
    let xv = x.values();
    if xv.nrows() != y.n_subjects() {
        return Err(VcompError::DimensionMismatch(format!(
            "{} covariate rows for {} subjects",
            xv.nrows(),
            y.n_subjects()
        )));
    }
    let c = xv.ncols();
    if c > xv.nrows() {
        return Err(VcompError::RankDeficient { rank: xv.nrows(), columns: c });
    }
    let sv = xv.clone().singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_RTOL * smax).count();
    if rank < c {
        return Err(VcompError::RankDeficient { rank, columns: c });
    }
    let q = xv.clone().qr().q();
    let yv = y.values();
    let fitted = &q * (q.transpose() * yv);
    y.with_values(yv - fitted)
}

/// Output of [`standardize_columns`].
#[derive(Debug, Clone)]
pub struct Standardized {
    pub traits: TraitMatrix,
    /// Original per-column sample standard deviations.
    pub scale: DVector<f64>,
}

impl Standardized {
    /// `diag(scale) · Σ · diag(scale)`: maps a covariance estimated on the
    /// standardized traits back to raw trait units.
    pub fn back_scale(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        back_scale(sigma, &self.scale)
    }

    /// Undo the standardization of a trait matrix.
    pub fn unscale(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = y.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= self.scale[j];
        }
        out
    }
}

pub fn back_scale(sigma: &DMatrix<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| scale[i] * sigma[(i, j)] * scale[j])
}

/// Divides every column by its sample standard deviation (n - 1 denominator).
/// Columns are not re-centred.
pub fn standardize_columns(y: &TraitMatrix) -> Result<Standardized> {
    let v = y.values();
    let n = v.nrows() as f64;
    let mut scale = DVector::zeros(v.ncols());
    for (j, col) in v.column_iter().enumerate() {
        let mean = col.mean();
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) || sd <= f64::EPSILON * col.amax() {
            return Err(VcompError::ZeroVariance(y.trait_ids()[j].clone()));
        }
        scale[j] = sd;
    }
    let mut out = v.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col /= scale[j];
    }
    Ok(Standardized { traits: y.with_values(out)?, scale })
}
