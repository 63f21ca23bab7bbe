use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VcompError};
use crate::linalg;
use crate::regression::fit::{Hyperparameters, LatentRegressionFit};
use crate::regression::partition::{BlockPartition, RegressionBlocks};

const SINGULAR_CONDITION: f64 = 1e12;

/// Best linear predictor of the response's latent component from the
/// predictors' latent components: `(Σ^{S,S})⁻¹ Σ^{S,F_j}`.
pub fn latent_beta_unregularized(sigma: &DMatrix<f64>, part: &BlockPartition, j: usize) -> Result<DVector<f64>> {
    let blocks = RegressionBlocks::extract(sigma, part, j)?;
    unregularized_from_blocks(&blocks)
}

pub(crate) fn unregularized_from_blocks(blocks: &RegressionBlocks) -> Result<DVector<f64>> {
    let cond = linalg::condition_number_sym(&blocks.predictors)?;
    if !(cond < SINGULAR_CONDITION) {
        return Err(VcompError::Singular(format!(
            "predictor block is singular (condition {cond:e}); use a regularized fit"
        )));
    }
    linalg::solve_spd(&blocks.predictors, &blocks.cross)
}

/// Latent R² of `beta`:
/// `1 - (Σ^{F_j,F_j} - 2βᵀΣ^{S,F_j} + βᵀΣ^{S,S}β) / Σ^{F_j,F_j}`.
/// Any coefficient vector is accepted, so a fit from one covariance
/// estimate can be scored against another.
pub fn latent_r2(sigma: &DMatrix<f64>, part: &BlockPartition, j: usize, beta: &DVector<f64>) -> Result<f64> {
    let blocks = RegressionBlocks::extract(sigma, part, j)?;
    r2_from_blocks(&blocks, beta)
}

pub(crate) fn r2_from_blocks(blocks: &RegressionBlocks, beta: &DVector<f64>) -> Result<f64> {
    if beta.len() != blocks.dim() {
        return Err(VcompError::DimensionMismatch(format!(
            "{} coefficients for {} predictors",
            beta.len(),
            blocks.dim()
        )));
    }
    let v = blocks.response_variance;
    if !(v > 0.0) {
        return Err(VcompError::ZeroVariance("response".into()));
    }
    Ok(1.0 - (v + blocks.loss(beta)) / v)
}

/// Result of [`to_correlation`].
#[derive(Debug, Clone)]
pub struct Correlation {
    pub matrix: DMatrix<f64>,
    /// Traits whose variance was not strictly positive. Their rows and
    /// columns (diagonal included) are zero in `matrix`.
    pub dropped: Vec<usize>,
}

/// `D^{-1/2} Σ D^{-1/2}` with `D = diag(Σ)`.
pub fn to_correlation(sigma: &DMatrix<f64>) -> Result<Correlation> {
    let q = sigma.nrows();
    let d: Vec<f64> = (0..q).map(|i| sigma[(i, i)]).collect();
    let dropped: Vec<usize> = (0..q).filter(|&i| !(d[i] > 0.0)).collect();
    if dropped.len() == q {
        return Err(VcompError::ZeroVariance("every trait".into()));
    }
    if !dropped.is_empty() {
        log::warn!("dropping {} trait(s) with zero variance from correlation: {:?}", dropped.len(), dropped);
    }
    let inv: Vec<f64> = d.iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }).collect();
    let mut matrix = DMatrix::from_fn(q, q, |i, j| sigma[(i, j)] * inv[i] * inv[j]);
    for i in 0..q {
        if inv[i] > 0.0 {
            matrix[(i, i)] = 1.0;
        }
    }
    Ok(Correlation { matrix: linalg::symmetrize(&matrix), dropped })
}

/// Ridge: `(Σ^{S,S} + λ I)⁻¹ Σ^{S,F_j}`.
pub fn fit_ridge(sigma: &DMatrix<f64>, part: &BlockPartition, j: usize, lambda: f64) -> Result<LatentRegressionFit> {
    if !(lambda >= 0.0) {
        return Err(VcompError::InvalidInput(format!("ridge penalty must be >= 0, got {lambda}")));
    }
    let blocks = RegressionBlocks::extract(sigma, part, j)?;
    ridge_from_blocks(&blocks, j, lambda)
}

pub(crate) fn ridge_from_blocks(blocks: &RegressionBlocks, j: usize, lambda: f64) -> Result<LatentRegressionFit> {
    let beta = if lambda == 0.0 {
        unregularized_from_blocks(blocks)?
    } else {
        let mut a = blocks.predictors.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        linalg::solve_spd(&a, &blocks.cross)?
    };
    let objective = blocks.loss(&beta) + lambda * beta.norm_squared();
    Ok(LatentRegressionFit {
        response_index: j,
        hyperparameters: Hyperparameters::Ridge { lambda },
        r2_in_sample: r2_from_blocks(blocks, &beta)?,
        beta,
        factors: None,
        objective,
        r2_out_of_sample: None,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn part3() -> BlockPartition {
        BlockPartition::new(vec![0, 1, 2], vec![3]).unwrap()
    }

    fn sigma_with(ss: &[f64], sf: &[f64], ff: f64) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(4, 4);
        s.view_mut((0, 0), (3, 3)).copy_from(&DMatrix::from_row_slice(3, 3, ss));
        for a in 0..3 {
            s[(a, 3)] = sf[a];
            s[(3, a)] = sf[a];
        }
        s[(3, 3)] = ff;
        s
    }

    #[test]
    fn zero_cross_gives_zero_beta() {
        let s = sigma_with(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0.0; 3], 1.0);
        let b = latent_beta_unregularized(&s, &part3(), 3).unwrap();
        assert_eq!(b, DVector::zeros(3));
        assert_eq!(latent_r2(&s, &part3(), 3, &b).unwrap(), 0.0);
    }

    #[test]
    fn identity_block_returns_cross_and_its_r2() {
        let s = sigma_with(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0.3, -0.2, 0.1], 2.0);
        let b = latent_beta_unregularized(&s, &part3(), 3).unwrap();
        assert_abs_diff_eq!(b, DVector::from_vec(vec![0.3, -0.2, 0.1]), epsilon = 1e-15);
        let r2 = latent_r2(&s, &part3(), 3, &b).unwrap();
        assert_abs_diff_eq!(r2, 0.14 / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_block_points_to_regularization() {
        let s = sigma_with(&[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0.1, 0.1, 0.0], 1.0);
        assert!(matches!(latent_beta_unregularized(&s, &part3(), 3), Err(VcompError::Singular(_))));
        assert!(fit_ridge(&s, &part3(), 3, 0.1).is_ok());
    }

    #[test]
    fn correlation_of_two_by_two() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 3.0, 3.0, 9.0]);
        let c = to_correlation(&s).unwrap();
        assert_abs_diff_eq!(c.matrix[(0, 1)], 0.5, epsilon = 1e-15);
        assert_eq!(c.matrix[(0, 0)], 1.0);
    }

    #[test]
    fn correlation_drops_zero_variance() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        let c = to_correlation(&s).unwrap();
        assert_eq!(c.dropped, vec![1]);
        assert!(to_correlation(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn ridge_zero_penalty_is_unregularized() {
        let s = sigma_with(&[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 1.0], 3.0);
        let r = fit_ridge(&s, &part3(), 3, 0.0).unwrap();
        assert_eq!(r.beta, latent_beta_unregularized(&s, &part3(), 3).unwrap());
        assert!(fit_ridge(&s, &part3(), 3, -1.0).is_err());
    }

    #[test]
    fn ridge_huge_penalty_shrinks() {
        let s = sigma_with(&[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 1.0], 3.0);
        let lambda = 1e8 * 3.0;
        let r = fit_ridge(&s, &part3(), 3, lambda).unwrap();
        assert!(r.beta.norm() <= 2f64.sqrt() / lambda);
    }
}
