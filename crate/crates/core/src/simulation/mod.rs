//! Matrix-normal sampling from the component model, synthetic ground
//! truths, and replicate sweeps comparing estimators.

mod design;
mod sampling;
mod sweep;
mod truth;

pub use design::{
    sample_observed, DesignConfig, FamilyMix, PartitionConfig, PreparedDesign, SimulationDesign, TruthSource,
};
pub use sampling::{job_seed, sample_matrix_normal, MatrixNormalSampler};
pub use sweep::{
    run_sweep, FailureRow, MetricRow, RuntimeRow, SimulationReport, SummaryRow, SweepEstimator, SweepOptions,
    SweepRegression,
};
pub use truth::{connectome_truth, make_lowdim_truth, random_correlation, ConnectomeTruthConfig};
