use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};

/// Predictor (structural) and response (functional) trait indices.
///
/// When the predictors form a `p × p` matrix, `matrix_cells[a]` holds the
/// `(row, col)` cell of predictor `a`; the default layout is column-major,
/// i.e. predictor `a` sits at `(a % p, a / p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    predictors: Vec<usize>,
    responses: Vec<usize>,
    matrix_side: Option<usize>,
    matrix_cells: Option<Vec<(usize, usize)>>,
}

impl BlockPartition {
    pub fn new(predictors: Vec<usize>, responses: Vec<usize>) -> Result<Self> {
        if predictors.is_empty() || responses.is_empty() {
            return Err(VcompError::InvalidInput("partition needs predictors and responses".into()));
        }
        let pset: HashSet<_> = predictors.iter().collect();
        if pset.len() != predictors.len() {
            return Err(VcompError::InvalidInput("duplicate predictor index".into()));
        }
        let rset: HashSet<_> = responses.iter().collect();
        if rset.len() != responses.len() {
            return Err(VcompError::InvalidInput("duplicate response index".into()));
        }
        if let Some(i) = responses.iter().find(|i| pset.contains(i)) {
            return Err(VcompError::InvalidInput(format!("trait {i} is both predictor and response")));
        }
        Ok(Self { predictors, responses, matrix_side: None, matrix_cells: None })
    }

    /// Attach a `p × p` layout in column-major order.
    pub fn with_matrix_shape(self, p: usize) -> Result<Self> {
        let cells = (0..p * p).map(|a| (a % p, a / p)).collect();
        self.with_matrix_cells(p, cells)
    }

    pub fn with_matrix_cells(mut self, p: usize, cells: Vec<(usize, usize)>) -> Result<Self> {
        if self.predictors.len() != p * p || cells.len() != p * p {
            return Err(VcompError::InvalidInput(format!(
                "matrix shape {p}x{p} needs {} predictors, have {}",
                p * p,
                self.predictors.len()
            )));
        }
        let unique: HashSet<_> = cells.iter().collect();
        if unique.len() != cells.len() || cells.iter().any(|&(r, c)| r >= p || c >= p) {
            return Err(VcompError::InvalidInput("matrix cells must be a permutation of the p x p grid".into()));
        }
        self.matrix_side = Some(p);
        self.matrix_cells = Some(cells);
        Ok(self)
    }

    pub fn predictors(&self) -> &[usize] {
        &self.predictors
    }

    pub fn responses(&self) -> &[usize] {
        &self.responses
    }

    pub fn matrix_side(&self) -> Option<usize> {
        self.matrix_side
    }

    pub fn matrix_cells(&self) -> Option<&[(usize, usize)]> {
        self.matrix_cells.as_deref()
    }

    pub fn max_index(&self) -> usize {
        self.predictors.iter().chain(&self.responses).copied().max().unwrap_or(0)
    }

    /// Predictor positions whose cells are transposes of each other, as
    /// `(a, b)` with `a < b`. Empty without a matrix layout.
    pub fn symmetric_pairs(&self) -> Vec<(usize, usize)> {
        let Some(cells) = self.matrix_cells() else { return Vec::new() };
        let mut pairs = Vec::new();
        for (a, &(r, c)) in cells.iter().enumerate() {
            if r < c {
                if let Some(b) = cells.iter().position(|&x| x == (c, r)) {
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }
}

/// The three blocks of `Σ` every fit for response `j` depends on.
#[derive(Debug, Clone)]
pub struct RegressionBlocks {
    /// `Σ^{S,S}`
    pub predictors: DMatrix<f64>,
    /// `Σ^{S,F_j}`
    pub cross: DVector<f64>,
    /// `Σ^{F_j,F_j}`
    pub response_variance: f64,
}

impl RegressionBlocks {
    pub fn extract(sigma: &DMatrix<f64>, part: &BlockPartition, j: usize) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || part.max_index() >= sigma.nrows() {
            return Err(VcompError::DimensionMismatch(format!(
                "partition indexes trait {} of a {}x{} matrix",
                part.max_index(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if !part.responses().contains(&j) {
            return Err(VcompError::InvalidInput(format!("trait {j} is not a response")));
        }
        let s = part.predictors();
        let predictors = DMatrix::from_fn(s.len(), s.len(), |a, b| sigma[(s[a], s[b])]);
        let cross = DVector::from_iterator(s.len(), s.iter().map(|&a| sigma[(a, j)]));
        Ok(Self { predictors, cross, response_variance: sigma[(j, j)] })
    }

    pub fn dim(&self) -> usize {
        self.cross.len()
    }

    /// `βᵀ Σ^{S,S} β - 2 βᵀ Σ^{S,F_j}` (no penalty).
    pub fn loss(&self, beta: &DVector<f64>) -> f64 {
        beta.dot(&(&self.predictors * beta)) - 2.0 * beta.dot(&self.cross)
    }
}
