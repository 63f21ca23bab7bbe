use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, VcompError};
use crate::linalg::SymmetricRoot;
use crate::model::StructureKernel;

const SAMPLER_PSD_RTOL: f64 = 1e-10;

/// Draws `n × q` matrices `L_D Z L_Σ` with `vec` covariance `Σ ⊗ D`, where
/// the roots are symmetric PSD square roots (singular inputs allowed).
#[derive(Debug, Clone)]
pub struct MatrixNormalSampler {
    row_root: SymmetricRoot,
    col_root: DMatrix<f64>,
    zero: bool,
}

impl MatrixNormalSampler {
    pub fn new(kernel: &StructureKernel, sigma: &DMatrix<f64>) -> Result<Self> {
        Self::from_matrices(kernel.matrix(), sigma)
    }

    pub fn from_matrices(row_cov: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(VcompError::DimensionMismatch("column covariance must be square".into()));
        }
        let row_root = SymmetricRoot::new(row_cov)?;
        let col = SymmetricRoot::new(sigma)?;
        for root in [&row_root, &col] {
            if root.min_eigenvalue() < -SAMPLER_PSD_RTOL * root.max_abs_eigenvalue().max(1.0) {
                return Err(VcompError::NotPsd { min_eigenvalue: root.min_eigenvalue() });
            }
        }
        let zero = sigma.iter().all(|&v| v == 0.0);
        Ok(Self { row_root, col_root: col.to_dense(), zero })
    }

    pub fn rows(&self) -> usize {
        self.row_root.dim()
    }

    pub fn cols(&self) -> usize {
        self.col_root.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let (n, q) = (self.rows(), self.cols());
        let z = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        if self.zero {
            return DMatrix::zeros(n, q);
        }
        self.row_root.apply(&z) * &self.col_root
    }
}

/// One matrix-normal draw `MN(0, kernel, sigma)` from a seeded stream.
pub fn sample_matrix_normal(kernel: &StructureKernel, sigma: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let sampler = MatrixNormalSampler::new(kernel, sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(&mut rng))
}

/// Stable per-job seed from `(seed, n, replicate)` (SplitMix64 finalizer).
pub fn job_seed(seed: u64, n: usize, replicate: usize) -> u64 {
    let mut z = seed
        ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (replicate as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
