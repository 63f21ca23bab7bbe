use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VcompError};
use crate::regression::fit::{Hyperparameters, LatentRegressionFit};
use crate::regression::partition::{BlockPartition, RegressionBlocks};
use crate::regression::plugin::r2_from_blocks;

/// Subgradient residual accepted at exit.
pub const KKT_TOLERANCE: f64 = 1e-6;
const COORD_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 200_000;
const PATH_STEPS: usize = 10;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Largest violation of the optimality conditions of
/// `βᵀSβ - 2βᵀc + λ‖β‖₁`: with `g = 2(Sβ - c)`, active coordinates need
/// `g_j = -λ sign(β_j)` and inactive ones `|g_j| ≤ λ`.
pub fn kkt_residual(s: &DMatrix<f64>, c: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let g = (s * beta - c) * 2.0;
    g.iter()
        .zip(beta.iter())
        .map(|(&gj, &bj)| {
            if bj != 0.0 {
                (gj + lambda * bj.signum()).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

struct CoordinateDescent<'a> {
    s: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
}

impl CoordinateDescent<'_> {
    fn check(&self) -> Result<()> {
        for j in 0..self.c.len() {
            if self.s[(j, j)] <= 0.0 && self.c[j] != 0.0 {
                return Err(VcompError::Singular(format!(
                    "predictor {j} has zero variance but nonzero covariance with the response"
                )));
            }
        }
        Ok(())
    }

    /// One cyclic pass over `coords`; returns the largest coefficient change.
    fn sweep(&self, beta: &mut DVector<f64>, grad_part: &mut DVector<f64>, coords: &[usize], lambda: f64) -> f64 {
        // grad_part = S β, kept in sync with every coordinate move
        let mut max_change = 0.0f64;
        for &j in coords {
            let sjj = self.s[(j, j)];
            if sjj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let partial = self.c[j] - (grad_part[j] - sjj * old);
            let new = soft_threshold(partial, lambda / 2.0) / sjj;
            if new != old {
                let delta = new - old;
                grad_part.axpy(delta, &self.s.column(j), 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Active-set cycling: converge on the nonzero coordinates, then confirm
    /// with a full pass; repeat until the full pass changes nothing.
    fn solve(&self, beta: &mut DVector<f64>, lambda: f64) -> bool {
        let p = self.c.len();
        let all: Vec<usize> = (0..p).collect();
        let mut grad_part = self.s * &*beta;
        let mut sweeps = 0;
        while sweeps < MAX_SWEEPS {
            let full = self.sweep(beta, &mut grad_part, &all, lambda);
            sweeps += 1;
            if full < COORD_TOL {
                return true;
            }
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            while sweeps < MAX_SWEEPS {
                let change = self.sweep(beta, &mut grad_part, &active, lambda);
                sweeps += 1;
                if change < COORD_TOL {
                    break;
                }
            }
        }
        false
    }
}

/// Lasso path with warm starts. `lambdas` may come in any order; they are
/// solved from largest to smallest and returned in the input order.
pub fn fit_lasso_path(
    sigma: &DMatrix<f64>,
    part: &BlockPartition,
    j: usize,
    lambdas: &[f64],
) -> Result<Vec<LatentRegressionFit>> {
    let blocks = RegressionBlocks::extract(sigma, part, j)?;
    lasso_path_from_blocks(&blocks, j, lambdas)
}

pub(crate) fn lasso_path_from_blocks(
    blocks: &RegressionBlocks,
    j: usize,
    lambdas: &[f64],
) -> Result<Vec<LatentRegressionFit>> {
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(VcompError::InvalidInput(format!("lasso penalty must be >= 0, got {l}")));
    }
    let cd = CoordinateDescent { s: &blocks.predictors, c: &blocks.cross };
    cd.check()?;
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));

    let mut beta = DVector::zeros(blocks.dim());
    let mut out: Vec<Option<LatentRegressionFit>> = vec![None; lambdas.len()];
    for idx in order {
        let lambda = lambdas[idx];
        let finished = cd.solve(&mut beta, lambda);
        let kkt = kkt_residual(&blocks.predictors, &blocks.cross, &beta, lambda);
        let converged = finished && kkt < KKT_TOLERANCE;
        if !converged {
            log::warn!("lasso for response {j} at λ={lambda:e} ended with KKT residual {kkt:e}");
        }
        out[idx] = Some(LatentRegressionFit {
            response_index: j,
            hyperparameters: Hyperparameters::Lasso { lambda },
            r2_in_sample: r2_from_blocks(blocks, &beta)?,
            objective: blocks.loss(&beta) + lambda * beta.lp_norm(1),
            beta: beta.clone(),
            factors: None,
            r2_out_of_sample: None,
            converged,
        });
    }
    Ok(out.into_iter().map(|f| f.expect("every lambda solved")).collect())
}

/// Lasso: minimizes `βᵀΣ^{S,S}β - 2βᵀΣ^{S,F_j} + λ‖β‖₁` by cyclic coordinate
/// descent, so each update soft-thresholds at `λ/2`. The solve is warm
/// started along a geometric path from `λ_max = 2‖Σ^{S,F_j}‖_∞` down to `λ`.
pub fn fit_lasso(sigma: &DMatrix<f64>, part: &BlockPartition, j: usize, lambda: f64) -> Result<LatentRegressionFit> {
    let blocks = RegressionBlocks::extract(sigma, part, j)?;
    lasso_from_blocks(&blocks, j, lambda)
}

pub(crate) fn lasso_from_blocks(blocks: &RegressionBlocks, j: usize, lambda: f64) -> Result<LatentRegressionFit> {
    if !(lambda >= 0.0) {
        return Err(VcompError::InvalidInput(format!("lasso penalty must be >= 0, got {lambda}")));
    }
    let lambda_max = 2.0 * blocks.cross.amax();
    let mut path = Vec::with_capacity(PATH_STEPS + 1);
    if lambda_max > lambda && lambda > 0.0 {
        let ratio = (lambda / lambda_max).powf(1.0 / PATH_STEPS as f64);
        path.extend((0..PATH_STEPS).map(|k| lambda_max * ratio.powi(k as i32)));
    }
    path.push(lambda);
    let mut fits = lasso_path_from_blocks(blocks, j, &path)?;
    Ok(fits.pop().expect("target lambda is last"))
}
