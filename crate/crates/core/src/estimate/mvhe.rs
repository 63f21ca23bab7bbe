use nalgebra::DMatrix;

use crate::error::{Result, VcompError};
use crate::estimate::covariance::CovarianceSet;
use crate::estimate::state::SolverState;
use crate::linalg;
use crate::model::{ComponentSpec, TraitMatrix};

/// Unconstrained moment solution in the solver's working space:
/// `Σ̂_k = Σ_z [Q⁻¹]_{kz} W_z`.
pub(crate) fn unconstrained_working(state: &SolverState, labels: &[String]) -> Result<Vec<DMatrix<f64>>> {
    let qinv = state.q().clone().try_inverse().ok_or_else(|| VcompError::SingularGram {
        condition: f64::INFINITY,
        labels: labels.join(", "),
    })?;
    let m = state.n_components();
    let d = state.working_dim();
    Ok((0..m)
        .map(|k| {
            let mut s = DMatrix::zeros(d, d);
            for z in 0..m {
                s += &state.w()[z] * qinv[(k, z)];
            }
            s
        })
        .collect())
}

/// Multivariate Haseman–Elston regression.
///
/// Solves every trait pair's least-squares problem jointly through the
/// kernel Gram matrix. With `truncate`, each component's negative
/// eigenvalues are set to zero afterwards (the mvHE estimator proper);
/// without it the raw least-squares solution is returned and certified only
/// if it happens to be PSD.
pub fn mvhe_fit(y: &TraitMatrix, spec: &ComponentSpec, truncate: bool) -> Result<CovarianceSet> {
    let state = SolverState::new(y.values(), spec, false)?;
    mvhe_from_state(&state, spec.labels(), truncate)
}

pub fn mvhe_from_state(state: &SolverState, labels: &[String], truncate: bool) -> Result<CovarianceSet> {
    let raw = unconstrained_working(state, labels)?;
    let lifted: Vec<_> = raw.iter().map(|s| state.lift(s)).collect();
    if truncate {
        let projected = lifted.iter().map(linalg::psd_project).collect::<Result<Vec<_>>>()?;
        let m = projected.len();
        CovarianceSet::with_certification(projected, labels.to_vec(), vec![true; m])
    } else {
        CovarianceSet::new(lifted, labels.to_vec())
    }
}
