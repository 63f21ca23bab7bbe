use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::regression::fit::{Hyperparameters, LatentRegressionFit};
use crate::regression::partition::{BlockPartition, RegressionBlocks};
use crate::regression::plugin::r2_from_blocks;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TensorOptions {
    pub restarts: usize,
    pub max_alternations: usize,
    /// Relative objective decrease per alternation below which we stop.
    pub tolerance: f64,
    /// The product `β₁β₂ᵀ` must also move by less than this fraction of
    /// its norm; the objective alone only pins it to about `√tolerance`.
    pub step_tolerance: f64,
    pub seed: u64,
}

impl Default for TensorOptions {
    fn default() -> Self {
        Self { restarts: 3, max_alternations: 500, tolerance: 1e-12, step_tolerance: 1e-9, seed: 0x7e45 }
    }
}

/// Blocks rearranged so predictor vectors are column-major `vec(B)` of a
/// `p × p` coefficient matrix.
struct VecProblem {
    p: usize,
    s: DMatrix<f64>,
    c: DVector<f64>,
    /// `vec_pos[a]` = column-major position of predictor `a`.
    vec_pos: Vec<usize>,
    lambda: f64,
}

impl VecProblem {
    fn new(blocks: &RegressionBlocks, part: &BlockPartition, lambda: f64) -> Result<Self> {
        let (Some(p), Some(cells)) = (part.matrix_side(), part.matrix_cells()) else {
            return Err(VcompError::InvalidInput("tensor regression needs a matrix-shaped partition".into()));
        };
        let vec_pos: Vec<usize> = cells.iter().map(|&(r, c)| r + p * c).collect();
        let m = p * p;
        let mut s = DMatrix::zeros(m, m);
        let mut c = DVector::zeros(m);
        for a in 0..m {
            c[vec_pos[a]] = blocks.cross[a];
            for b in 0..m {
                s[(vec_pos[a], vec_pos[b])] = blocks.predictors[(a, b)];
            }
        }
        Ok(Self { p, s, c, vec_pos, lambda })
    }

    fn objective(&self, b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> f64 {
        let v = vec_of(&(b1 * b2.transpose()));
        v.dot(&(&self.s * &v)) - 2.0 * v.dot(&self.c) + self.lambda * (b1.norm_squared() + b2.norm_squared())
    }

    /// Exact minimizer of the quadratic `xᵀ(AᵀSA + λI)x - 2xᵀAᵀc`.
    fn solve_half(&self, a: &DMatrix<f64>) -> DVector<f64> {
        let mut h = a.transpose() * (&self.s * a);
        for i in 0..h.nrows() {
            h[(i, i)] += self.lambda;
        }
        let rhs = a.transpose() * &self.c;
        if let Some(ch) = h.clone().cholesky() {
            let x = ch.solve(&rhs);
            if x.iter().all(|v| v.is_finite()) {
                return x;
            }
        }
        // singular at λ = 0: minimum-norm minimizer
        let svd = h.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        svd.solve(&rhs, tol).unwrap_or_else(|_| DVector::zeros(rhs.len()))
    }

    /// β₁ update with β₂ fixed: `vec(β₁β₂ᵀ) = (β₂ ⊗ I_p) vec(β₁)`.
    fn update_left(&self, b2: &DMatrix<f64>) -> DMatrix<f64> {
        let a = b2.kronecker(&DMatrix::<f64>::identity(self.p, self.p));
        let x = self.solve_half(&a);
        DMatrix::from_column_slice(self.p, b2.ncols(), x.as_slice())
    }

    /// β₂ update with β₁ fixed: `vec(β₁β₂ᵀ) = (I_p ⊗ β₁) vec(β₂ᵀ)`.
    fn update_right(&self, b1: &DMatrix<f64>) -> DMatrix<f64> {
        let a = DMatrix::<f64>::identity(self.p, self.p).kronecker(b1);
        let x = self.solve_half(&a);
        DMatrix::from_column_slice(b1.ncols(), self.p, x.as_slice()).transpose()
    }
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Outcome of one alternating-minimization run.
#[derive(Debug, Clone)]
pub struct TensorRun {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    /// Objective after every half-update, starting from the initialization.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

fn alternate(problem: &VecProblem, mut b1: DMatrix<f64>, mut b2: DMatrix<f64>, opts: &TensorOptions) -> TensorRun {
    let mut trace = vec![problem.objective(&b1, &b2)];
    let mut converged = false;
    let mut product = &b1 * b2.transpose();
    for _ in 0..opts.max_alternations {
        let prev = *trace.last().expect("non-empty trace");
        b1 = problem.update_left(&b2);
        trace.push(problem.objective(&b1, &b2));
        b2 = problem.update_right(&b1);
        let f = problem.objective(&b1, &b2);
        trace.push(f);
        let next = &b1 * b2.transpose();
        let step = (&next - &product).norm();
        product = next;
        if (prev - f) <= opts.tolerance * prev.abs().max(1e-300)
            && step <= opts.step_tolerance * product.norm().max(1e-300)
        {
            converged = true;
            break;
        }
    }
    TensorRun { left: b1, right: b2, objective_trace: trace, converged }
}

/// Alternating minimization from the given factors (`p × r` each). Exposed
/// so callers can control the initialization.
pub fn fit_tensor_from(
    sigma: &DMatrix<f64>,
    part: &BlockPartition,
    j: usize,
    lambda: f64,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    opts: &TensorOptions,
) -> Result<(LatentRegressionFit, TensorRun)> {
    let blocks = RegressionBlocks::extract(sigma, part, j)?;
    let problem = VecProblem::new(&blocks, part, lambda)?;
    check_factor(&left, problem.p)?;
    check_factor(&right, problem.p)?;
    if left.ncols() != right.ncols() {
        return Err(VcompError::DimensionMismatch("factor ranks differ".into()));
    }
    let run = alternate(&problem, left, right, opts);
    let fit = finish(&blocks, &problem, j, &run)?;
    Ok((fit, run))
}

fn check_factor(f: &DMatrix<f64>, p: usize) -> Result<()> {
    if f.nrows() != p || f.ncols() == 0 {
        return Err(VcompError::DimensionMismatch(format!(
            "factor of shape {}x{} for side {p}",
            f.nrows(),
            f.ncols()
        )));
    }
    Ok(())
}

fn finish(blocks: &RegressionBlocks, problem: &VecProblem, j: usize, run: &TensorRun) -> Result<LatentRegressionFit> {
    let v = vec_of(&(&run.left * run.right.transpose()));
    let beta = DVector::from_iterator(problem.vec_pos.len(), problem.vec_pos.iter().map(|&pos| v[pos]));
    Ok(LatentRegressionFit {
        response_index: j,
        hyperparameters: Hyperparameters::Tensor { rank: run.left.ncols(), lambda: problem.lambda },
        r2_in_sample: r2_from_blocks(blocks, &beta)?,
        objective: *run.objective_trace.last().expect("non-empty trace"),
        beta,
        factors: Some((run.left.clone(), run.right.clone())),
        r2_out_of_sample: None,
        converged: run.converged,
    })
}

/// Rank-`r` tensor regression: `mat(β) = β₁β₂ᵀ` with `β₁, β₂ ∈ ℝ^{p×r}`,
/// minimizing `βᵀΣ^{S,S}β - 2βᵀΣ^{S,F_j} + λ(‖β₁‖² + ‖β₂‖²)` by alternating
/// exact solves. Keeps the best of `opts.restarts` random initializations
/// (entries standard normal over `√p`).
pub fn fit_tensor(
    sigma: &DMatrix<f64>,
    part: &BlockPartition,
    j: usize,
    rank: usize,
    lambda: f64,
    opts: &TensorOptions,
) -> Result<LatentRegressionFit> {
    let blocks = RegressionBlocks::extract(sigma, part, j)?;
    tensor_from_blocks(&blocks, part, j, rank, lambda, opts)
}

pub(crate) fn tensor_from_blocks(
    blocks: &RegressionBlocks,
    part: &BlockPartition,
    j: usize,
    rank: usize,
    lambda: f64,
    opts: &TensorOptions,
) -> Result<LatentRegressionFit> {
    if rank == 0 {
        return Err(VcompError::InvalidInput("tensor rank must be >= 1".into()));
    }
    if !(lambda >= 0.0) {
        return Err(VcompError::InvalidInput(format!("tensor penalty must be >= 0, got {lambda}")));
    }
    let problem = VecProblem::new(blocks, part, lambda)?;
    let p = problem.p;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (j as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let scale = 1.0 / (p as f64).sqrt();
    let mut best: Option<TensorRun> = None;
    for _ in 0..opts.restarts.max(1) {
        let mut draw = || DMatrix::from_fn(p, rank, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); scale * z });
        let (b1, b2) = (draw(), draw());
        let run = alternate(&problem, b1, b2, opts);
        let f = *run.objective_trace.last().expect("non-empty trace");
        if best.as_ref().is_none_or(|b| f < *b.objective_trace.last().expect("non-empty trace")) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    if !run.converged {
        log::warn!("tensor regression for response {j} hit the alternation cap");
    }
    finish(blocks, &problem, j, &run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn requires_matrix_shape() {
        let s = DMatrix::identity(5, 5);
        let part = BlockPartition::new(vec![0, 1, 2, 3], vec![4]).unwrap();
        assert!(fit_tensor(&s, &part, 4, 1, 0.0, &TensorOptions::default()).is_err());
    }

    #[test]
    fn rank_one_target_is_recovered_exactly() {
        // Σ^{S,S} = I and mat(c) = u vᵀ: the rank-1 fit reproduces c.
        let p = 3;
        let u = [1.0, -0.5, 0.25];
        let v = [0.2, 0.4, -0.1];
        let m = p * p;
        let mut s = DMatrix::identity(m + 1, m + 1);
        for a in 0..m {
            let val = u[a % p] * v[a / p];
            s[(a, m)] = val;
            s[(m, a)] = val;
        }
        let part = BlockPartition::new((0..m).collect(), vec![m]).unwrap().with_matrix_shape(p).unwrap();
        let fit = fit_tensor(&s, &part, m, 1, 0.0, &TensorOptions::default()).unwrap();
        let expected = DVector::from_iterator(m, (0..m).map(|a| u[a % p] * v[a / p]));
        assert_abs_diff_eq!(fit.beta, expected, epsilon = 1e-9);
    }
}
