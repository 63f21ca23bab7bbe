use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Result, VcompError};

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(VcompError::InvalidInput(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(())
}

fn check_finite(values: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some((idx, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        let (r, c) = (idx % values.nrows(), idx / values.nrows());
        return Err(VcompError::InvalidInput(format!(
            "{what} has non-finite entry {v} at ({r}, {c})"
        )));
    }
    Ok(())
}

/// Phenotype matrix: rows are subjects, columns are traits.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitMatrix {
    values: DMatrix<f64>,
    subject_ids: Vec<String>,
    trait_ids: Vec<String>,
}

impl TraitMatrix {
    pub fn new(values: DMatrix<f64>, subject_ids: Vec<String>, trait_ids: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 1 {
            return Err(VcompError::InvalidInput(format!(
                "trait matrix must be at least 2x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if subject_ids.len() != values.nrows() || trait_ids.len() != values.ncols() {
            return Err(VcompError::DimensionMismatch(format!(
                "{} subject ids / {} trait ids for a {}x{} matrix",
                subject_ids.len(),
                trait_ids.len(),
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values, "trait matrix")?;
        check_unique(&subject_ids, "subject")?;
        check_unique(&trait_ids, "trait")?;
        Ok(Self { values, subject_ids, trait_ids })
    }

    /// Wraps a bare matrix with generated ids `s0..`, `t0..`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let subjects = (0..values.nrows()).map(|i| format!("s{i}")).collect();
        let traits = (0..values.ncols()).map(|j| format!("t{j}")).collect();
        Self::new(values, subjects, traits)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn trait_ids(&self) -> &[String] {
        &self.trait_ids
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_traits(&self) -> usize {
        self.values.ncols()
    }

    /// Same ids, new values of identical shape.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, self.subject_ids.clone(), self.trait_ids.clone())
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows.iter());
        let ids = rows.iter().map(|&r| self.subject_ids[r].clone()).collect();
        Self::new(values, ids, self.trait_ids.clone())
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// Nuisance design for residualization. Must contain an intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(VcompError::DimensionMismatch(format!(
                "{} covariate names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        check_finite(&values, "covariate matrix")?;
        check_unique(&names, "covariate")?;
        let has_intercept = (0..values.ncols()).any(|c| values.column(c).iter().all(|&v| v == 1.0));
        if !has_intercept {
            return Err(VcompError::InvalidInput(
                "covariate matrix must include an all-ones intercept column".into(),
            ));
        }
        Ok(Self { values, names })
    }

    /// Prepends an intercept column (named `intercept`) to the given covariates.
    pub fn with_intercept(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let n = values.nrows();
        let mut full = DMatrix::from_element(n, values.ncols() + 1, 1.0);
        full.columns_mut(1, values.ncols()).copy_from(&values);
        let mut all_names = vec!["intercept".to_string()];
        all_names.extend(names);
        Self::new(full, all_names)
    }

    pub fn intercept_only(n: usize) -> Self {
        Self { values: DMatrix::from_element(n, 1, 1.0), names: vec!["intercept".into()] }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(TraitMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn rejects_duplicate_ids() {
        let m = DMatrix::zeros(2, 1);
        let r = TraitMatrix::new(m, vec!["a".into(), "a".into()], vec!["t".into()]);
        assert!(matches!(r, Err(VcompError::InvalidInput(_))));
    }

    #[test]
    fn rejects_single_row() {
        assert!(TraitMatrix::from_matrix(DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn covariates_need_intercept() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(CovariateMatrix::new(x.clone(), vec!["age".into()]).is_err());
        let c = CovariateMatrix::with_intercept(x, vec!["age".into()]).unwrap();
        assert_eq!(c.names(), &["intercept".to_string(), "age".to_string()]);
    }
}
