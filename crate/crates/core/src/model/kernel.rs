use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::linalg;

/// Tolerance on the smallest eigenvalue when validating kernels.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Absolute symmetry tolerance for kernels.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Gram condition numbers above this are treated as singular.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Identity,
    Kinship,
    Household,
    Custom,
}

/// Row covariance of one latent component: symmetric, unit diagonal, PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureKernel {
    matrix: DMatrix<f64>,
    kind: KernelKind,
    psd_warning: bool,
}

impl StructureKernel {
    pub fn identity(n: usize) -> Self {
        Self { matrix: DMatrix::identity(n, n), kind: KernelKind::Identity, psd_warning: false }
    }

    /// Validates symmetry, unit diagonal and positive semi-definiteness.
    /// Kinship and household kernels that fail the PSD check are rejected;
    /// custom kernels are accepted with [`StructureKernel::psd_warning`] set.
    pub fn new(matrix: DMatrix<f64>, kind: KernelKind) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(VcompError::DimensionMismatch(format!(
                "kernel must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(VcompError::InvalidInput("kernel has non-finite entries".into()));
        }
        let asym = linalg::max_asymmetry(&matrix);
        if asym > SYMMETRY_TOLERANCE {
            return Err(VcompError::InvalidInput(format!("kernel is not symmetric (max |A - Aᵀ| = {asym:e})")));
        }
        if let Some(i) = (0..n).find(|&i| (matrix[(i, i)] - 1.0).abs() > SYMMETRY_TOLERANCE) {
            return Err(VcompError::InvalidInput(format!(
                "kernel diagonal must be 1, entry {i} is {}",
                matrix[(i, i)]
            )));
        }
        let mut matrix = linalg::symmetrize(&matrix);
        matrix.fill_diagonal(1.0);

        let mut psd_warning = false;
        if kind != KernelKind::Identity {
            let min_eigenvalue = linalg::min_eigenvalue_blockwise(&matrix)?;
            if min_eigenvalue < -PSD_TOLERANCE {
                if kind == KernelKind::Custom {
                    log::warn!("custom kernel has smallest eigenvalue {min_eigenvalue:e}");
                    psd_warning = true;
                } else {
                    return Err(VcompError::NotPsd { min_eigenvalue });
                }
            }
        }
        Ok(Self { matrix, kind, psd_warning })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Set for custom kernels whose smallest eigenvalue fell below `-1e-10`.
    pub fn psd_warning(&self) -> bool {
        self.psd_warning
    }

    /// Principal submatrix on `rows` (in that order). Principal submatrices
    /// of a PSD unit-diagonal kernel keep both properties.
    pub fn select(&self, rows: &[usize]) -> Self {
        let matrix = self.matrix.select_rows(rows.iter()).select_columns(rows.iter());
        Self { matrix, kind: self.kind, psd_warning: self.psd_warning }
    }

    /// Block-diagonal replication of `self` until `n` rows are filled; the
    /// final block is truncated to the leading principal submatrix.
    pub fn tile_block_diagonal(&self, n: usize) -> Self {
        let b = self.dim();
        let mut matrix = DMatrix::zeros(n, n);
        let mut start = 0;
        while start < n {
            let len = b.min(n - start);
            matrix
                .view_mut((start, start), (len, len))
                .copy_from(&self.matrix.view((0, 0), (len, len)));
            start += len;
        }
        Self { matrix, kind: self.kind, psd_warning: self.psd_warning }
    }
}

/// Ordered kernels `D_0..D_K` with component labels. Index 0 is always the
/// identity (unique-environment) kernel.
#[derive(Debug, Clone)]
pub struct ComponentSpec {
    kernels: Vec<StructureKernel>,
    labels: Vec<String>,
    gram: DMatrix<f64>,
    gram_condition: f64,
}

impl ComponentSpec {
    pub fn new(kernels: Vec<StructureKernel>, labels: Vec<String>) -> Result<Self> {
        if kernels.is_empty() || kernels.len() != labels.len() {
            return Err(VcompError::InvalidInput(format!(
                "{} kernels with {} labels",
                kernels.len(),
                labels.len()
            )));
        }
        let n = kernels[0].dim();
        if let Some(k) = kernels.iter().find(|k| k.dim() != n) {
            return Err(VcompError::DimensionMismatch(format!("kernel of size {} next to size {n}", k.dim())));
        }
        let first = &kernels[0];
        if first.kind() != KernelKind::Identity && first.matrix() != &DMatrix::identity(n, n) {
            return Err(VcompError::InvalidInput("component 0 must use the identity kernel".into()));
        }
        let gram = gram_matrix(&kernels);
        let gram_condition = linalg::condition_number_sym(&gram)?;
        if !(gram_condition < GRAM_CONDITION_LIMIT) {
            return Err(VcompError::SingularGram {
                condition: gram_condition,
                labels: collinear_labels(&gram, &labels)?,
            });
        }
        Ok(Self { kernels, labels, gram, gram_condition })
    }

    /// Unique environment (E), additive genetic (G) and common environment (C).
    pub fn ace(kinship: StructureKernel, household: StructureKernel) -> Result<Self> {
        let n = kinship.dim();
        Self::new(
            vec![StructureKernel::identity(n), kinship, household],
            vec!["E".into(), "G".into(), "C".into()],
        )
    }

    /// Unique environment (E) and additive genetic (G) only.
    pub fn ae(kinship: StructureKernel) -> Result<Self> {
        let n = kinship.dim();
        Self::new(vec![StructureKernel::identity(n), kinship], vec!["E".into(), "G".into()])
    }

    pub fn kernels(&self) -> &[StructureKernel] {
        &self.kernels
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_components(&self) -> usize {
        self.kernels.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.kernels[0].dim()
    }

    /// `Q[z][k] = Σ_{i,l} [D_z]_{il} [D_k]_{il}`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_condition(&self) -> f64 {
        self.gram_condition
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.eq_ignore_ascii_case(label))
    }

    /// Restricts every kernel to `rows`.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let kernels = self.kernels.iter().map(|k| k.select(rows)).collect();
        Self::new(kernels, self.labels.clone())
    }
}

pub(crate) fn gram_matrix(kernels: &[StructureKernel]) -> DMatrix<f64> {
    let m = kernels.len();
    let mut q = DMatrix::zeros(m, m);
    for z in 0..m {
        for k in z..m {
            let v = kernels[z].matrix().component_mul(kernels[k].matrix()).sum();
            q[(z, k)] = v;
            q[(k, z)] = v;
        }
    }
    q
}

fn collinear_labels(gram: &DMatrix<f64>, labels: &[String]) -> Result<String> {
    let eig = linalg::sym_eigen(gram)?;
    let (idx, _) = eig.eigenvalues.argmin();
    let v = eig.eigenvectors.column(idx);
    let named: Vec<&str> = v
        .iter()
        .zip(labels)
        .filter(|(c, _)| c.abs() > 1e-3)
        .map(|(_, l)| l.as_str())
        .collect();
    Ok(named.join(", "))
}
