use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VcompError};
use crate::estimate::mvrehe::{mvrehe_from_state, SolveOptions};
use crate::estimate::state::SolverState;
use crate::model::ComponentSpec;

/// Largest component count solved by exhaustive active-set enumeration.
const MAX_ENUMERATED_COMPONENTS: usize = 12;

/// Single-trait Haseman–Elston fit. Returns one variance per kernel.
///
/// With `restricted`, variances are constrained to be nonnegative (REHE).
/// The constrained problem is a strictly convex quadratic in `K + 1`
/// variables, solved exactly by enumerating active sets.
pub fn univariate_fit(y_column: &DVector<f64>, spec: &ComponentSpec, restricted: bool) -> Result<DVector<f64>> {
    let y = DMatrix::from_column_slice(y_column.len(), 1, y_column.as_slice());
    let state = SolverState::new(&y, spec, false)?;
    let w = DVector::from_iterator(state.n_components(), state.w().iter().map(|m| m[(0, 0)]));
    let q = state.q();
    let unconstrained = q
        .clone()
        .cholesky()
        .map(|c| c.solve(&w))
        .ok_or_else(|| VcompError::SingularGram {
            condition: spec.gram_condition(),
            labels: spec.labels().join(", "),
        })?;
    if !restricted || unconstrained.iter().all(|&v| v >= 0.0) {
        return Ok(unconstrained);
    }
    let m = w.len();
    if m > MAX_ENUMERATED_COMPONENTS {
        let opts = SolveOptions { tolerance: 1e-15, max_iterations: 100_000, ..SolveOptions::default() };
        let (set, _) = mvrehe_from_state(&state, spec.labels(), &opts)?;
        return Ok(DVector::from_iterator(m, set.sigmas().iter().map(|s| s[(0, 0)])));
    }
    nonnegative_quadratic(q, &w)
}

/// Minimizes `σᵀQσ - 2wᵀσ` over `σ ≥ 0` for positive definite `Q`.
fn nonnegative_quadratic(q: &DMatrix<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    let m = w.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let free: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let mut sigma = DVector::zeros(m);
        if !free.is_empty() {
            let qs = q.select_rows(free.iter()).select_columns(free.iter());
            let ws = DVector::from_iterator(free.len(), free.iter().map(|&i| w[i]));
            let Some(sol) = qs.cholesky().map(|c| c.solve(&ws)) else { continue };
            if sol.iter().any(|&v| v < 0.0) {
                continue;
            }
            for (a, &i) in free.iter().enumerate() {
                sigma[i] = sol[a];
            }
        }
        let value = sigma.dot(&(q * &sigma)) - 2.0 * w.dot(&sigma);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, sigma));
        }
    }
    best.map(|(_, s)| s)
        .ok_or_else(|| VcompError::Singular("no feasible active set".into()))
}
