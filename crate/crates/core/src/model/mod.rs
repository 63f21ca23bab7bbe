//! Domain types, structure kernels built from pedigrees, and trait
//! preprocessing (covariate residualization, column standardization).

mod kernel;
mod pedigree;
mod preprocess;
mod traits;

pub use kernel::{
    ComponentSpec, KernelKind, StructureKernel, GRAM_CONDITION_LIMIT, PSD_TOLERANCE, SYMMETRY_TOLERANCE,
};
pub use pedigree::{build_household, build_kinship, Pedigree, PedigreeRecord, RelationClass};
pub use preprocess::{back_scale, residualize, standardize_columns, Standardized};
pub use traits::{CovariateMatrix, TraitMatrix};
