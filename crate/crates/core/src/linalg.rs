//! Dense symmetric linear-algebra helpers shared by the estimators,
//! the samplers and the regression solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, VcompError};

/// Relative magnitude below which an eigenvalue is treated as zero.
pub const EIGEN_ZERO_RTOL: f64 = 1e-12;

const EIGEN_MAX_ITER: usize = 10_000;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Symmetric eigendecomposition. Fails with a conditioning diagnostic when
/// the QR iteration does not converge.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(VcompError::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(VcompError::Eigen("matrix has non-finite entries".into()));
    }
    SymmetricEigen::try_new(a.clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| {
        let fro = a.norm();
        let diag_max = a.diagonal().amax();
        VcompError::Eigen(format!(
            "no convergence for {}x{} matrix (Frobenius norm {fro:e}, max |diag| {diag_max:e})",
            a.nrows(),
            a.ncols()
        ))
    })
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigen(a)?.eigenvalues.min())
}

/// Smallest eigenvalue, decomposing each connected block of the nonzero
/// pattern separately (cheap for block-diagonal kernels).
pub fn min_eigenvalue_blockwise(a: &DMatrix<f64>) -> Result<f64> {
    let mut min = f64::INFINITY;
    for idx in nonzero_blocks(a) {
        let v = if idx.len() == 1 {
            a[(idx[0], idx[0])]
        } else {
            let sub = a.select_rows(idx.iter()).select_columns(idx.iter());
            sym_eigen(&symmetrize(&sub))?.eigenvalues.min()
        };
        min = min.min(v);
    }
    Ok(min)
}

pub fn max_abs_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigen(a)?.eigenvalues.amax())
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm_sym(a: &DMatrix<f64>) -> Result<f64> {
    max_abs_eigenvalue(&symmetrize(a))
}

/// Rebuilds `U f(Λ) Uᵀ` from an eigendecomposition.
pub fn eigen_reconstruct(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = f(lam);
        scaled.column_mut(k).scale_mut(v);
    }
    let out = scaled * u.transpose();
    symmetrize(&out)
}

/// Frobenius-nearest positive semi-definite matrix: eigenvalues of the
/// symmetric input are truncated at zero. Eigenvalues of magnitude below
/// `1e-12 · max|λ|` count as zero. A PSD input is returned unchanged.
pub fn psd_project(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(s)?;
    let scale = eig.eigenvalues.amax();
    let cutoff = EIGEN_ZERO_RTOL * scale;
    if eig.eigenvalues.iter().all(|&l| l >= -cutoff) {
        return Ok(s.clone());
    }
    Ok(eigen_reconstruct(&eig, |l| if l > cutoff { l } else { 0.0 }))
}

/// True when the smallest eigenvalue is at least `-rtol · max|λ|`.
pub fn is_psd(a: &DMatrix<f64>, rtol: f64) -> Result<bool> {
    let eig = sym_eigen(&symmetrize(a))?;
    let scale = eig.eigenvalues.amax();
    Ok(eig.eigenvalues.min() >= -rtol * scale.max(f64::MIN_POSITIVE))
}

/// Connected components of the nonzero pattern of a symmetric matrix.
/// Each component is returned as a sorted index list; components are
/// ordered by their smallest index.
pub fn nonzero_blocks(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut label = vec![usize::MAX; n];
    let mut blocks = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![start];
        label[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for j in 0..n {
                if label[j] == usize::MAX && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0) {
                    label[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    blocks
}

/// Symmetric PSD square root `L = U Λ₊^{1/2} Uᵀ`, stored per connected
/// block of the input's nonzero pattern so block-diagonal kernels with
/// thousands of rows stay cheap. Negative eigenvalues are clamped to zero,
/// which lets rank-deficient kernels (MZ twin blocks) through.
#[derive(Debug, Clone)]
pub struct SymmetricRoot {
    dim: usize,
    blocks: Vec<(Vec<usize>, DMatrix<f64>)>,
    min_eigenvalue: f64,
    max_abs_eigenvalue: f64,
}

impl SymmetricRoot {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let blocks = nonzero_blocks(a)
            .into_iter()
            .map(|idx| {
                let sub = a.select_rows(idx.iter()).select_columns(idx.iter());
                let root = if idx.len() == 1 {
                    let v = sub[(0, 0)];
                    lo = lo.min(v);
                    hi = hi.max(v.abs());
                    DMatrix::from_element(1, 1, v.max(0.0).sqrt())
                } else {
                    let eig = sym_eigen(&symmetrize(&sub))?;
                    lo = lo.min(eig.eigenvalues.min());
                    hi = hi.max(eig.eigenvalues.amax());
                    eigen_reconstruct(&eig, |l| l.max(0.0).sqrt())
                };
                Ok((idx, root))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim: a.nrows(), blocks, min_eigenvalue: lo, max_abs_eigenvalue: hi })
    }

    /// Smallest eigenvalue of the input (before clamping).
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.max_abs_eigenvalue
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L · X`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim, "root/operand dimension mismatch");
        let mut out = DMatrix::zeros(self.dim, x.ncols());
        for (idx, root) in &self.blocks {
            if idx.len() == 1 {
                let r = root[(0, 0)];
                let i = idx[0];
                for c in 0..x.ncols() {
                    out[(i, c)] = r * x[(i, c)];
                }
                continue;
            }
            let sub = x.select_rows(idx.iter());
            let prod = root * sub;
            for (local, &i) in idx.iter().enumerate() {
                out.row_mut(i).copy_from(&prod.row(local));
            }
        }
        out
    }

    /// Dense `L`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (idx, root) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    out[(i, j)] = root[(a, b)];
                }
            }
        }
        out
    }
}

/// Solves the symmetric positive definite system `A x = b`, falling back to
/// LU when Cholesky fails.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| VcompError::Singular(format!("{}x{} system", a.nrows(), a.ncols())))
}

/// 2-norm condition number of a symmetric matrix.
pub fn condition_number_sym(a: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eigen(a)?;
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &l| m.min(l.abs()));
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}
