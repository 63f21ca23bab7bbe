use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VcompError};
use crate::linalg;

/// Relative eigenvalue tolerance used when certifying an estimate as PSD.
pub const CERTIFY_RTOL: f64 = 1e-8;

/// Estimated column covariances `Σ_0..Σ_K`, one per structure kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    sigmas: Vec<DMatrix<f64>>,
    labels: Vec<String>,
    psd_certified: Vec<bool>,
}

impl CovarianceSet {
    /// Builds a set and certifies each component by an eigenvalue check.
    pub fn new(sigmas: Vec<DMatrix<f64>>, labels: Vec<String>) -> Result<Self> {
        let certified = sigmas
            .iter()
            .map(|s| linalg::is_psd(s, CERTIFY_RTOL))
            .collect::<Result<Vec<_>>>()?;
        Self::with_certification(sigmas, labels, certified)
    }

    pub(crate) fn with_certification(
        sigmas: Vec<DMatrix<f64>>,
        labels: Vec<String>,
        psd_certified: Vec<bool>,
    ) -> Result<Self> {
        if sigmas.is_empty() || sigmas.len() != labels.len() || labels.len() != psd_certified.len() {
            return Err(VcompError::InvalidInput(format!(
                "{} covariance matrices with {} labels",
                sigmas.len(),
                labels.len()
            )));
        }
        let q = sigmas[0].nrows();
        for s in &sigmas {
            if s.nrows() != q || s.ncols() != q {
                return Err(VcompError::DimensionMismatch(format!(
                    "component of shape {}x{} next to {q}x{q}",
                    s.nrows(),
                    s.ncols()
                )));
            }
        }
        let sigmas = sigmas.iter().map(linalg::symmetrize).collect();
        Ok(Self { sigmas, labels, psd_certified })
    }

    pub fn sigmas(&self) -> &[DMatrix<f64>] {
        &self.sigmas
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn psd_certified(&self) -> &[bool] {
        &self.psd_certified
    }

    pub fn all_certified(&self) -> bool {
        self.psd_certified.iter().all(|&c| c)
    }

    pub fn n_traits(&self) -> usize {
        self.sigmas[0].nrows()
    }

    pub fn n_components(&self) -> usize {
        self.sigmas.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.eq_ignore_ascii_case(label))
    }

    pub fn get(&self, label: &str) -> Option<&DMatrix<f64>> {
        self.index_of(label).map(|i| &self.sigmas[i])
    }

    /// Sum of all components (the implied total covariance).
    pub fn total(&self) -> DMatrix<f64> {
        self.sigmas.iter().skip(1).fold(self.sigmas[0].clone(), |acc, s| acc + s)
    }

    /// Applies `f` to every component and re-certifies.
    pub fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Result<Self> {
        Self::new(self.sigmas.iter().map(f).collect(), self.labels.clone())
    }
}

/// Per-trait fraction of total variance attributed to the `G` component.
pub fn heritability(sigmas: &CovarianceSet) -> Result<DVector<f64>> {
    if !sigmas.all_certified() {
        return Err(VcompError::InvalidInput("heritability requires PSD-certified components".into()));
    }
    let g = sigmas
        .get("G")
        .ok_or_else(|| VcompError::InvalidInput("no component labelled G".into()))?;
    let q = sigmas.n_traits();
    let mut h = DVector::zeros(q);
    for j in 0..q {
        let total: f64 = sigmas.sigmas().iter().map(|s| s[(j, j)]).sum();
        if !(total > 0.0) {
            return Err(VcompError::ZeroVariance(format!("trait {j}")));
        }
        h[j] = (g[(j, j)] / total).clamp(0.0, 1.0);
    }
    Ok(h)
}
