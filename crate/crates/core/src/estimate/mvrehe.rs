use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::estimate::covariance::CovarianceSet;
use crate::estimate::mvhe::unconstrained_working;
use crate::estimate::state::SolverState;
use crate::linalg;
use crate::model::{ComponentSpec, TraitMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SvdReduction {
    /// Reduce whenever there are more traits than subjects.
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    #[default]
    Zeros,
    MvheTruncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Stop once a full cycle lowers the objective by less than this
    /// fraction of its previous value.
    pub tolerance: f64,
    pub use_svd_reduction: SvdReduction,
    pub initialization: Initialization,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-8,
            use_svd_reduction: SvdReduction::Auto,
            initialization: Initialization::Zeros,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(VcompError::InvalidInput("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(VcompError::InvalidInput(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        Ok(())
    }

    pub fn reduce_for(&self, n: usize, q: usize) -> bool {
        match self.use_svd_reduction {
            SvdReduction::Auto => q > n,
            SvdReduction::On => true,
            SvdReduction::Off => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Objective after each full cycle, starting with the initial value.
    pub objective_trace: Vec<f64>,
    /// Objective after every single block update.
    pub block_trace: Vec<f64>,
    pub svd_reduced: bool,
    pub working_dim: usize,
}

/// Restricted multivariate Haseman–Elston estimator.
///
/// Minimizes the moment-matching least-squares objective subject to every
/// `Σ_k ⪰ 0` by cyclic block coordinate descent. The update for block `z`
/// holds the others fixed and is the PSD projection of
/// `(W_z - Σ_{k≠z} Q_{zk} Σ_k) / Q_{zz}`. When reduction applies the loop
/// runs on `Y V` (compact SVD) and results are lifted back as `V Σ̃ Vᵀ`.
///
/// Reaching `max_iterations` is not an error: the last (and best) iterate is
/// returned with `converged = false`.
pub fn mvrehe_fit(
    y: &TraitMatrix,
    spec: &ComponentSpec,
    opts: &SolveOptions,
) -> Result<(CovarianceSet, SolveDiagnostics)> {
    opts.validate()?;
    let reduce = opts.reduce_for(y.n_subjects(), y.n_traits());
    let state = SolverState::new(y.values(), spec, reduce)?;
    mvrehe_from_state(&state, spec.labels(), opts)
}

pub fn mvrehe_from_state(
    state: &SolverState,
    labels: &[String],
    opts: &SolveOptions,
) -> Result<(CovarianceSet, SolveDiagnostics)> {
    opts.validate()?;
    let m = state.n_components();
    let d = state.working_dim();
    let q = state.q();

    let mut sigmas: Vec<DMatrix<f64>> = match opts.initialization {
        Initialization::Zeros => vec![DMatrix::zeros(d, d); m],
        Initialization::MvheTruncated => unconstrained_working(state, labels)?
            .iter()
            .map(linalg::psd_project)
            .collect::<Result<_>>()?,
    };

    let mut f_prev = state.objective(&sigmas)?;
    let mut objective_trace = vec![f_prev];
    let mut block_trace = Vec::with_capacity(opts.max_iterations.min(64) * m);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        for z in 0..m {
            let mut target = state.w()[z].clone();
            for k in (0..m).filter(|&k| k != z) {
                target -= &sigmas[k] * q[(z, k)];
            }
            target /= q[(z, z)];
            sigmas[z] = linalg::psd_project(&linalg::symmetrize(&target))?;
            block_trace.push(state.objective(&sigmas)?);
        }
        let f = *block_trace.last().expect("at least one block");
        objective_trace.push(f);
        let decrease = f_prev - f;
        let rel = if f_prev > 0.0 { decrease / f_prev } else { 0.0 };
        f_prev = f;
        if rel < opts.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("mvREHE stopped after {iterations} cycles without meeting tolerance {:e}", opts.tolerance);
    }

    let lifted = sigmas.iter().map(|s| state.lift(s)).collect();
    let set = CovarianceSet::with_certification(lifted, labels.to_vec(), vec![true; m])?;
    let diag = SolveDiagnostics {
        iterations,
        converged,
        objective: f_prev,
        objective_trace,
        block_trace,
        svd_reduced: state.is_reduced(),
        working_dim: d,
    };
    Ok((set, diag))
}
