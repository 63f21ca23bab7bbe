use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Result, VcompError};
use crate::model::{ComponentSpec, KernelKind};

/// Singular values below this fraction of the largest are dropped from the
/// compact SVD used for dimension reduction.
pub const SVD_RANK_RTOL: f64 = 1e-12;

/// Precomputed moment statistics for the least-squares objective.
///
/// * `w[z] = Ỹᵀ D_z Ỹ`, where `Ỹ = Y V` when the compact-SVD reduction is
///   applied and `Ỹ = Y` otherwise;
/// * `q[z][k] = Σ_{i,l} [D_z]_{il} [D_k]_{il}`;
/// * `v` holds the right singular vectors (q × rank) when reduced.
#[derive(Debug, Clone)]
pub struct SolverState {
    w: Vec<DMatrix<f64>>,
    q: DMatrix<f64>,
    v: Option<DMatrix<f64>>,
    /// `Σ_{j,l} ‖y_j‖² ‖y_l‖² = ‖Y‖_F⁴`, the objective at all-zero covariances.
    constant: f64,
    n_traits: usize,
}

impl SolverState {
    pub fn new(y: &DMatrix<f64>, spec: &ComponentSpec, reduce: bool) -> Result<Self> {
        if y.nrows() != spec.n_subjects() {
            return Err(VcompError::DimensionMismatch(format!(
                "{} trait rows for kernels of size {}",
                y.nrows(),
                spec.n_subjects()
            )));
        }
        let n_traits = y.ncols();
        let (work, v) = if reduce {
            let (yv, v) = compact_svd_projection(y)?;
            (yv, Some(v))
        } else {
            (y.clone(), None)
        };
        let w: Vec<DMatrix<f64>> = spec
            .kernels()
            .par_iter()
            .map(|k| {
                let wz = if k.kind() == KernelKind::Identity {
                    work.tr_mul(&work)
                } else {
                    work.tr_mul(&(k.matrix() * &work))
                };
                crate::linalg::symmetrize(&wz)
            })
            .collect();
        let constant = work.norm_squared().powi(2);
        Ok(Self { w, q: spec.gram().clone(), v, constant, n_traits })
    }

    pub fn w(&self) -> &[DMatrix<f64>] {
        &self.w
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn v(&self) -> Option<&DMatrix<f64>> {
        self.v.as_ref()
    }

    pub fn is_reduced(&self) -> bool {
        self.v.is_some()
    }

    /// Dimension the solver works in (`rank(Y)` when reduced, `q` otherwise).
    pub fn working_dim(&self) -> usize {
        self.w[0].nrows()
    }

    pub fn n_traits(&self) -> usize {
        self.n_traits
    }

    pub fn n_components(&self) -> usize {
        self.w.len()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// `V Σ̃ Vᵀ`, or a clone when no reduction is in effect.
    pub fn lift(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.v {
            Some(v) => crate::linalg::symmetrize(&(v * sigma * v.transpose())),
            None => sigma.clone(),
        }
    }

    /// `Vᵀ Σ V`, or a clone when no reduction is in effect.
    pub fn restrict(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.v {
            Some(v) => crate::linalg::symmetrize(&(v.transpose() * sigma * v)),
            None => sigma.clone(),
        }
    }

    /// Least-squares objective
    /// `Σ_{i,l} ‖y_i y_lᵀ - Σ_k [D_k]_{il} Σ_k‖_F²` in expanded trace form:
    /// `‖Y‖_F⁴ - 2 Σ_k ⟨W_k, Σ_k⟩ + Σ_{k,k'} Q_{kk'} ⟨Σ_k, Σ_k'⟩`.
    /// `sigmas` live in the working space.
    pub fn objective(&self, sigmas: &[DMatrix<f64>]) -> Result<f64> {
        let d = self.working_dim();
        if sigmas.len() != self.w.len() || sigmas.iter().any(|s| s.nrows() != d || s.ncols() != d) {
            return Err(VcompError::DimensionMismatch(format!(
                "objective needs {} {d}x{d} matrices",
                self.w.len()
            )));
        }
        let m = sigmas.len();
        let mut f = self.constant;
        for k in 0..m {
            f -= 2.0 * self.w[k].dot(&sigmas[k]);
            f += self.q[(k, k)] * sigmas[k].norm_squared();
            for k2 in (k + 1)..m {
                f += 2.0 * self.q[(k, k2)] * sigmas[k].dot(&sigmas[k2]);
            }
        }
        Ok(f.max(0.0))
    }
}

/// `Y = U D Vᵀ` (compact); returns `(Y V, V)` with rank-deficient directions
/// dropped.
fn compact_svd_projection(y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let svd = y.clone().svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| VcompError::Eigen("SVD did not produce right singular vectors".into()))?;
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > SVD_RANK_RTOL * smax)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(VcompError::InvalidInput("trait matrix is identically zero".into()));
    }
    let v = vt.select_rows(keep.iter()).transpose();
    let yv = y * &v;
    Ok((yv, v))
}

/// Objective of full-dimensional covariances against raw data.
pub fn objective_value(y: &DMatrix<f64>, spec: &ComponentSpec, sigmas: &[DMatrix<f64>]) -> Result<f64> {
    SolverState::new(y, spec, false)?.objective(sigmas)
}
